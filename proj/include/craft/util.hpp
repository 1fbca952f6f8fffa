#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace craft {

/// Uniform double in [lo, hi) built from the top 53 bits of the generator
/// output. Unlike std::uniform_real_distribution the stream is identical
/// across standard library implementations.
inline double uniform_double(std::mt19937_64& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
}

inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t bound) {
    return bound == 0 ? 0 : rng() % bound;
}

/// Fisher-Yates with an explicit draw sequence, so shuffles are reproducible
/// from the seed alone.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

/// Runs run_chunk(begin, end) over a static partition of [0, n).
/// Chunks are contiguous and disjoint; callers that write only to
/// per-index slots get the same result for any thread count.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& run_chunk);

} // namespace craft
