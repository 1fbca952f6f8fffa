#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "craft/memory.hpp"
#include "craft/relation_graph.hpp"

namespace craft {

/// Truncated low-frequency spectrum of one memory key column, with its L2
/// norm precomputed for the similarity denominator.
struct SpectralKey {
    std::vector<std::complex<double>> spectrum;  // length F, DC bin first
    double norm = 0.0;
    long entry_id = 0;
    int channel_id = 0;

    bool operator==(const SpectralKey&) const = default;
};

struct KbConfig {
    std::uint32_t lookback = 0;
    std::uint32_t horizon = 0;
    std::uint32_t freq_cutoff = 0;
    std::uint32_t channels = 0;
    std::uint32_t entries = 0;

    bool operator==(const KbConfig&) const = default;
};

/// Channel-wise knowledge base: per channel, one spectral key and one value
/// horizon per memory entry, plus the relation graph used to prune retrieval
/// candidates. keys[c][i] pairs with values[c][i]; entry_t_end[i] is shared
/// by all channels of entry i and drives leakage exclusion.
struct KnowledgeBase {
    std::vector<std::vector<SpectralKey>> keys;
    std::vector<std::vector<std::vector<double>>> values;
    RelationGraph graph;
    KbConfig config;
    std::vector<long> entry_t_end;

    bool operator==(const KnowledgeBase&) const = default;
};

struct KbBuildStats {
    double mean_retained_energy = 0.0;  // truncated / total spectral energy
};

/// Spectra, norms and value horizons for every (entry, channel), ordered by
/// (channel, entry). Throws on empty memory or a cutoff invalid for L.
KnowledgeBase build_knowledge_base(const std::vector<MemoryEntry>& memory,
                                   const RelationGraph& graph, std::size_t freq_cutoff,
                                   KbBuildStats* stats = nullptr, int threads = 1);

/// Single-file binary format, versioned and CRC-32 checked; load(save(kb))
/// is bit-exact. When `expected` is given, its nonzero fields must match the
/// stored config or loading fails.
void save_kb(const KnowledgeBase& kb, const std::string& path);
KnowledgeBase load_kb(const std::string& path);
KnowledgeBase load_kb(const std::string& path, const KbConfig& expected);

/// Default frequency cutoff for a lookback length: 36 at L=720, otherwise
/// 5% of the one-sided spectrum (at least 1).
std::size_t default_freq_cutoff(std::size_t lookback);

} // namespace craft
