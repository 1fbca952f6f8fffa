#include "craft/spectral_memory.hpp"

#include <cmath>
#include <stdexcept>

#include "craft/binary_io.hpp"
#include "craft/fft.hpp"
#include "craft/util.hpp"

namespace craft {

namespace {

constexpr char kMagic[4] = {'C', 'R', 'K', 'B'};
constexpr std::uint32_t kVersion = 1;

double spectrum_norm(const std::vector<std::complex<double>>& spectrum) {
    double s = 0.0;
    for (const auto& z : spectrum) s += std::norm(z);
    return std::sqrt(s);
}

} // namespace

std::size_t default_freq_cutoff(std::size_t lookback) {
    if (lookback == 720) return 36;
    const auto bins = static_cast<double>(lookback / 2 + 1);
    const auto f = static_cast<std::size_t>(std::llround(0.05 * bins));
    return std::max<std::size_t>(1, f);
}

KnowledgeBase build_knowledge_base(const std::vector<MemoryEntry>& memory,
                                   const RelationGraph& graph, std::size_t freq_cutoff,
                                   KbBuildStats* stats, int threads) {
    if (memory.empty()) throw std::invalid_argument("build_knowledge_base: empty memory");
    const std::size_t lookback = memory.front().key.rows();
    const std::size_t horizon = memory.front().value.rows();
    const std::size_t channels = memory.front().key.cols();
    for (const MemoryEntry& e : memory)
        if (e.key.rows() != lookback || e.value.rows() != horizon || e.key.cols() != channels ||
            e.value.cols() != channels)
            throw std::invalid_argument("build_knowledge_base: inconsistent entry shapes");
    if (freq_cutoff < 1 || freq_cutoff > lookback / 2 + 1)
        throw std::invalid_argument("build_knowledge_base: frequency cutoff out of range");
    if (graph.channel_count != static_cast<int>(channels))
        throw std::invalid_argument("build_knowledge_base: graph channel count mismatch");

    KnowledgeBase kb;
    kb.config = {static_cast<std::uint32_t>(lookback), static_cast<std::uint32_t>(horizon),
                 static_cast<std::uint32_t>(freq_cutoff), static_cast<std::uint32_t>(channels),
                 static_cast<std::uint32_t>(memory.size())};
    kb.graph = graph;
    kb.keys.resize(channels);
    kb.values.resize(channels);
    kb.entry_t_end.reserve(memory.size());
    for (const MemoryEntry& e : memory) kb.entry_t_end.push_back(e.t_end);

    for (std::size_t c = 0; c < channels; ++c) {
        kb.keys[c].resize(memory.size());
        kb.values[c].resize(memory.size());
    }

    // retained[c] accumulates truncated / total energy per column; the
    // total comes from the time domain via Parseval, no full FFT needed.
    std::vector<double> retained(channels, 0.0);

    parallel_for(channels, threads, [&](std::size_t c_begin, std::size_t c_end) {
        std::vector<double> column(lookback);
        for (std::size_t c = c_begin; c < c_end; ++c) {
            for (std::size_t i = 0; i < memory.size(); ++i) {
                const MemoryEntry& entry = memory[i];
                double time_energy = 0.0;
                for (std::size_t r = 0; r < lookback; ++r) {
                    column[r] = entry.key(r, c);
                    time_energy += column[r] * column[r];
                }
                SpectralKey key;
                key.spectrum = fft::truncated_rfft(column, freq_cutoff);
                key.norm = spectrum_norm(key.spectrum);
                key.entry_id = static_cast<long>(i);
                key.channel_id = static_cast<int>(c);

                const double total = static_cast<double>(lookback) * time_energy;
                if (total > 1e-300) {
                    double kept = 0.0;
                    for (std::size_t k = 0; k < key.spectrum.size(); ++k) {
                        const bool one_sided = k == 0 || (lookback % 2 == 0 && k == lookback / 2);
                        kept += (one_sided ? 1.0 : 2.0) * std::norm(key.spectrum[k]);
                    }
                    retained[c] += kept / total;
                } else {
                    retained[c] += 1.0;
                }

                kb.keys[c][i] = std::move(key);
                kb.values[c][i] = entry.value.col(c);
            }
        }
    });

    if (stats != nullptr) {
        double sum = 0.0;
        for (const double r : retained) sum += r;
        stats->mean_retained_energy = sum / static_cast<double>(channels * memory.size());
    }
    return kb;
}

void save_kb(const KnowledgeBase& kb, const std::string& path) {
    ByteWriter w;
    w.magic(kMagic);
    w.u32(kVersion);
    w.u32(kb.config.lookback);
    w.u32(kb.config.horizon);
    w.u32(kb.config.freq_cutoff);
    w.u32(kb.config.channels);
    w.u32(kb.config.entries);

    w.u32(static_cast<std::uint32_t>(kb.graph.channel_count));
    w.u32(static_cast<std::uint32_t>(kb.graph.m));
    for (const auto& list : kb.graph.neighbors) {
        w.u32(static_cast<std::uint32_t>(list.size()));
        for (const auto& [id, score] : list) {
            w.u32(static_cast<std::uint32_t>(id));
            w.f64(score);
        }
    }

    for (const long t : kb.entry_t_end) w.i64(t);

    for (std::uint32_t c = 0; c < kb.config.channels; ++c) {
        for (const SpectralKey& key : kb.keys[c])
            for (const auto& z : key.spectrum) {
                w.f64(z.real());
                w.f64(z.imag());
            }
        for (const SpectralKey& key : kb.keys[c]) w.f64(key.norm);
        for (const auto& value : kb.values[c]) w.f64_span(value);
    }
    w.write_file(path);
}

KnowledgeBase load_kb(const std::string& path) {
    ByteReader r(path);
    r.expect_magic(kMagic, "knowledge base");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw std::runtime_error("version mismatch: file has v" + std::to_string(version) +
                                 ", expected v" + std::to_string(kVersion));

    KnowledgeBase kb;
    kb.config.lookback = r.u32();
    kb.config.horizon = r.u32();
    kb.config.freq_cutoff = r.u32();
    kb.config.channels = r.u32();
    kb.config.entries = r.u32();

    kb.graph.channel_count = static_cast<int>(r.u32());
    kb.graph.m = static_cast<int>(r.u32());
    if (kb.graph.channel_count != static_cast<int>(kb.config.channels))
        throw std::runtime_error("corrupt knowledge base: graph channel count");
    kb.graph.neighbors.resize(kb.config.channels);
    for (auto& list : kb.graph.neighbors) {
        const std::uint32_t count = r.u32();
        if (count >= kb.config.channels)
            throw std::runtime_error("corrupt knowledge base: neighbor list length");
        list.resize(count);
        for (auto& [id, score] : list) {
            id = static_cast<int>(r.u32());
            score = r.f64();
        }
    }

    kb.entry_t_end.resize(kb.config.entries);
    for (long& t : kb.entry_t_end) t = static_cast<long>(r.i64());

    kb.keys.resize(kb.config.channels);
    kb.values.resize(kb.config.channels);
    for (std::uint32_t c = 0; c < kb.config.channels; ++c) {
        kb.keys[c].resize(kb.config.entries);
        kb.values[c].resize(kb.config.entries);
        for (std::uint32_t i = 0; i < kb.config.entries; ++i) {
            SpectralKey& key = kb.keys[c][i];
            key.spectrum.resize(kb.config.freq_cutoff);
            for (auto& z : key.spectrum) {
                const double re = r.f64();
                const double im = r.f64();
                z = {re, im};
            }
            key.entry_id = static_cast<long>(i);
            key.channel_id = static_cast<int>(c);
        }
        for (std::uint32_t i = 0; i < kb.config.entries; ++i) kb.keys[c][i].norm = r.f64();
        for (std::uint32_t i = 0; i < kb.config.entries; ++i) {
            kb.values[c][i].resize(kb.config.horizon);
            r.f64_span(kb.values[c][i]);
        }
    }
    if (r.remaining() != 0) throw std::runtime_error("corrupt knowledge base: trailing bytes");
    return kb;
}

KnowledgeBase load_kb(const std::string& path, const KbConfig& expected) {
    KnowledgeBase kb = load_kb(path);
    const auto ok = [](std::uint32_t want, std::uint32_t got) { return want == 0 || want == got; };
    if (!ok(expected.lookback, kb.config.lookback) || !ok(expected.horizon, kb.config.horizon) ||
        !ok(expected.freq_cutoff, kb.config.freq_cutoff) ||
        !ok(expected.channels, kb.config.channels) || !ok(expected.entries, kb.config.entries))
        throw std::runtime_error("config mismatch: knowledge base was built with different "
                                 "lookback/horizon/freq-cutoff settings");
    return kb;
}

} // namespace craft
