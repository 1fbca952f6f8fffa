#include "craft/memory.hpp"

namespace craft {

std::vector<MemoryEntry> memory_from_series(const MultivariateSeries& series,
                                            std::size_t lookback, std::size_t horizon) {
    std::vector<MemoryEntry> memory;
    for (const long t_end : window_ends(series, lookback, horizon, 1)) {
        WindowPair pair = make_window(series, t_end, lookback, horizon);
        memory.push_back({std::move(pair.x), std::move(pair.y), pair.t_end});
    }
    return memory;
}

} // namespace craft
