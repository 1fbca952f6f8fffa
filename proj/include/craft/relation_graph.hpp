#pragma once

#include <span>
#include <utility>
#include <vector>

#include "craft/memory.hpp"

namespace craft {

/// Per-channel top-M neighbor lists from cosine similarity of concatenated
/// trajectories. Lists are sorted by similarity descending, ties broken by
/// lower channel id, and never contain the channel itself.
struct RelationGraph {
    std::vector<std::vector<std::pair<int, double>>> neighbors;
    int channel_count = 0;
    int m = 0;

    bool operator==(const RelationGraph&) const = default;
};

/// Channel i of every memory key, concatenated in memory order (length N*L).
struct ChannelTrajectory {
    std::vector<double> z;
    int channel_id = 0;
};

ChannelTrajectory concat_trajectory(const std::vector<MemoryEntry>& memory, int channel);

/// a.b / (|a||b|). Either vector with norm below 1e-12 yields 0.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// All C(C-1)/2 pair similarities are computed once and mirrored.
/// m >= C is clamped to C-1 with a warning on stderr.
RelationGraph build_graph(const std::vector<MemoryEntry>& memory, int m, int threads = 1);

} // namespace craft
