#include "craft/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "craft/fft.hpp"

namespace craft {

void OpCounter::merge(const OpCounter& other) {
    similarity_evals += other.similarity_evals;
    if (pool_sizes.size() < other.pool_sizes.size()) pool_sizes.resize(other.pool_sizes.size(), 0);
    for (std::size_t i = 0; i < other.pool_sizes.size(); ++i) pool_sizes[i] += other.pool_sizes[i];
}

QuerySpectrum make_query_spectrum(std::span<const double> x, std::size_t freq_cutoff) {
    QuerySpectrum q;
    q.spectrum = fft::truncated_rfft(x, freq_cutoff);
    double s = 0.0;
    for (const auto& z : q.spectrum) s += std::norm(z);
    q.norm = std::sqrt(s);
    return q;
}

double spectral_similarity(const QuerySpectrum& q, const SpectralKey& k, double eps) {
    if (q.spectrum.size() != k.spectrum.size())
        throw std::invalid_argument("spectral_similarity: length mismatch");
    if (eps <= 0.0) throw std::invalid_argument("spectral_similarity: eps must be positive");
    double re = 0.0;
    for (std::size_t f = 0; f < q.spectrum.size(); ++f) {
        // Re{q * conj(k)} accumulated directly; the imaginary part is never
        // needed.
        re += q.spectrum[f].real() * k.spectrum[f].real() +
              q.spectrum[f].imag() * k.spectrum[f].imag();
    }
    return re / (q.norm * k.norm + eps);
}

std::vector<int> candidate_pool(const RelationGraph& graph, int channel) {
    if (channel < 0 || channel >= graph.channel_count)
        throw std::out_of_range("candidate_pool: channel out of range");
    std::vector<int> pool;
    pool.reserve(graph.neighbors[static_cast<std::size_t>(channel)].size() + 1);
    pool.push_back(channel);
    for (const auto& [id, score] : graph.neighbors[static_cast<std::size_t>(channel)])
        if (id != channel) pool.push_back(id);
    return pool;
}

namespace {

struct Candidate {
    double score;
    int channel;
    long entry;
};

// Higher score wins; ties go to the lower channel id, then lower entry id.
bool better(const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.channel != b.channel) return a.channel < b.channel;
    return a.entry < b.entry;
}

bool intervals_overlap(long a_lo, long a_hi, const TimeInterval& b) {
    return a_lo <= b.hi && b.lo <= a_hi;
}

} // namespace

std::vector<RetrievedReference> retrieve_channel(const KnowledgeBase& kb,
                                                 std::span<const double> x_c, int channel, int r,
                                                 std::optional<TimeInterval> exclude,
                                                 OpCounter* counter) {
    if (r < 1) throw std::invalid_argument("retrieve_channel: r must be >= 1");
    if (x_c.size() != kb.config.lookback)
        throw std::invalid_argument("retrieve_channel: query length mismatch");

    const QuerySpectrum q = make_query_spectrum(x_c, kb.config.freq_cutoff);
    const auto lookback = static_cast<long>(kb.config.lookback);
    const auto horizon = static_cast<long>(kb.config.horizon);

    // Insertion-sorted top-r buffer; r is small in practice.
    std::vector<Candidate> top;
    top.reserve(static_cast<std::size_t>(r) + 1);
    long long scored = 0;

    for (const int j : candidate_pool(kb.graph, channel)) {
        const auto& keys = kb.keys[static_cast<std::size_t>(j)];
        for (const SpectralKey& key : keys) {
            if (exclude) {
                const long t_end = kb.entry_t_end[static_cast<std::size_t>(key.entry_id)];
                if (intervals_overlap(t_end - lookback + 1, t_end + horizon, *exclude)) continue;
            }
            ++scored;
            const Candidate cand{spectral_similarity(q, key), j, key.entry_id};
            if (top.size() == static_cast<std::size_t>(r) && !better(cand, top.back())) continue;
            auto pos = std::lower_bound(top.begin(), top.end(), cand,
                                        [](const Candidate& a, const Candidate& b) {
                                            return better(a, b);
                                        });
            top.insert(pos, cand);
            if (top.size() > static_cast<std::size_t>(r)) top.pop_back();
        }
    }

    if (counter != nullptr) {
        if (counter->pool_sizes.size() < kb.config.channels)
            counter->pool_sizes.resize(kb.config.channels, 0);
        counter->pool_sizes[static_cast<std::size_t>(channel)] += scored;
        counter->similarity_evals += scored;
    }

    std::vector<RetrievedReference> refs;
    refs.reserve(top.size());
    for (const Candidate& cand : top)
        refs.push_back({kb.values[static_cast<std::size_t>(cand.channel)]
                                 [static_cast<std::size_t>(cand.entry)],
                        cand.score, cand.channel, cand.entry});
    return refs;
}

std::vector<std::vector<RetrievedReference>> retrieve_all(const KnowledgeBase& kb,
                                                          const Matrix& x, int r,
                                                          std::optional<TimeInterval> exclude,
                                                          OpCounter* counter) {
    if (x.rows() != kb.config.lookback || x.cols() != kb.config.channels)
        throw std::invalid_argument("retrieve_all: window shape mismatch");
    std::vector<std::vector<RetrievedReference>> out(x.cols());
    std::vector<double> column(x.rows());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        for (std::size_t t = 0; t < x.rows(); ++t) column[t] = x(t, c);
        out[c] = retrieve_channel(kb, column, static_cast<int>(c), r, exclude, counter);
    }
    return out;
}

} // namespace craft
