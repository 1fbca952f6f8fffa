#pragma once

#include <vector>

#include "craft/series.hpp"

namespace craft {

/// One stored (key = past lookback window, value = its realized horizon)
/// pair. value covers [t_end+1, t_end+H] of the source series.
struct MemoryEntry {
    Matrix key;    // L x C
    Matrix value;  // H x C
    long t_end = 0;
};

/// Dense stride-1 memory over a (typically train) series.
std::vector<MemoryEntry> memory_from_series(const MultivariateSeries& series,
                                            std::size_t lookback, std::size_t horizon);

} // namespace craft
