#include "craft/relation_graph.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "craft/util.hpp"

namespace craft {

ChannelTrajectory concat_trajectory(const std::vector<MemoryEntry>& memory, int channel) {
    if (memory.empty()) throw std::invalid_argument("concat_trajectory: empty memory");
    const std::size_t channels = memory.front().key.cols();
    if (channel < 0 || static_cast<std::size_t>(channel) >= channels)
        throw std::out_of_range("concat_trajectory: channel out of range");

    const std::size_t lookback = memory.front().key.rows();
    ChannelTrajectory traj;
    traj.channel_id = channel;
    traj.z.reserve(memory.size() * lookback);
    for (const MemoryEntry& entry : memory) {
        if (entry.key.rows() != lookback || entry.key.cols() != channels)
            throw std::invalid_argument("concat_trajectory: inconsistent key shapes");
        for (std::size_t r = 0; r < lookback; ++r)
            traj.z.push_back(entry.key(r, static_cast<std::size_t>(channel)));
    }
    return traj;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return dot / (na * nb);
}

RelationGraph build_graph(const std::vector<MemoryEntry>& memory, int m, int threads) {
    if (memory.empty()) throw std::invalid_argument("build_graph: empty memory");
    const int channels = static_cast<int>(memory.front().key.cols());
    if (channels < 2) throw std::invalid_argument("build_graph: need at least 2 channels");
    if (m < 1) throw std::invalid_argument("build_graph: m must be >= 1");
    if (m > channels - 1) {
        std::cerr << "warning: m=" << m << " clamped to " << channels - 1
                  << " (a channel has only " << channels - 1 << " possible neighbors)\n";
        m = channels - 1;
    }

    std::vector<ChannelTrajectory> trajectories;
    trajectories.reserve(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) trajectories.push_back(concat_trajectory(memory, c));

    // Upper triangle once, then mirrored; sim(i,j) and sim(j,i) are the
    // same double.
    std::vector<std::pair<int, int>> ij;
    for (int i = 0; i < channels; ++i)
        for (int j = i + 1; j < channels; ++j) ij.emplace_back(i, j);

    const auto n = static_cast<std::size_t>(channels);
    std::vector<double> sim(n * n, 0.0);
    parallel_for(ij.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const auto [i, j] = ij[k];
            const double s = cosine_similarity(trajectories[static_cast<std::size_t>(i)].z,
                                               trajectories[static_cast<std::size_t>(j)].z);
            sim[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)] = s;
            sim[static_cast<std::size_t>(j) * n + static_cast<std::size_t>(i)] = s;
        }
    });

    RelationGraph graph;
    graph.channel_count = channels;
    graph.m = m;
    graph.neighbors.resize(n);
    for (int i = 0; i < channels; ++i) {
        std::vector<std::pair<int, double>> ranked;
        ranked.reserve(n - 1);
        for (int j = 0; j < channels; ++j)
            if (j != i) ranked.emplace_back(j, sim[static_cast<std::size_t>(i) * n +
                                                   static_cast<std::size_t>(j)]);
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        ranked.resize(static_cast<std::size_t>(m));
        graph.neighbors[static_cast<std::size_t>(i)] = std::move(ranked);
    }
    return graph;
}

} // namespace craft
