#pragma once

#include <optional>
#include <span>
#include <vector>

#include "craft/spectral_memory.hpp"

namespace craft {

inline constexpr double kSimilarityEps = 1e-8;

/// One retrieved reference: the matched key's paired value horizon, the
/// similarity score, and where it came from.
struct RetrievedReference {
    std::vector<double> value;  // length H
    double score = 0.0;
    int source_channel = 0;
    long source_entry = 0;
};

struct QuerySpectrum {
    std::vector<std::complex<double>> spectrum;
    double norm = 0.0;
};

/// Closed interval of global time indices. A memory entry spanning
/// [t_end-L+1, t_end+H] is skipped when that span intersects the interval.
struct TimeInterval {
    long lo = 0;
    long hi = 0;
};

/// Per-query instrumentation: pool_sizes[c] counts the candidate keys scored
/// for query channel c, so similarity_evals == sum(pool_sizes) always.
struct OpCounter {
    long long similarity_evals = 0;
    std::vector<long long> pool_sizes;

    void merge(const OpCounter& other);
};

QuerySpectrum make_query_spectrum(std::span<const double> x, std::size_t freq_cutoff);

/// Re{sum_f q[f] * conj(k[f])} / (|q| * |k| + eps).
double spectral_similarity(const QuerySpectrum& q, const SpectralKey& k,
                           double eps = kSimilarityEps);

/// The query channel itself followed by its graph neighbors in rank order.
std::vector<int> candidate_pool(const RelationGraph& graph, int channel);

/// Scores every key of every pool channel against the query spectrum and
/// returns the top r. Ties break by (lower source channel, lower entry id),
/// so results are deterministic. May return fewer than r entries (empty if
/// exclusion removed everything).
std::vector<RetrievedReference> retrieve_channel(const KnowledgeBase& kb,
                                                 std::span<const double> x_c, int channel, int r,
                                                 std::optional<TimeInterval> exclude = {},
                                                 OpCounter* counter = nullptr);

/// retrieve_channel applied independently per channel of an L x C window.
std::vector<std::vector<RetrievedReference>> retrieve_all(const KnowledgeBase& kb,
                                                          const Matrix& x, int r,
                                                          std::optional<TimeInterval> exclude = {},
                                                          OpCounter* counter = nullptr);

} // namespace craft
