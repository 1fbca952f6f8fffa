#include "craft/util.hpp"

#include <thread>

namespace craft {

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& run_chunk) {
    if (n == 0) return;
    const std::size_t nthreads =
        threads <= 1 ? 1 : std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    if (nthreads == 1) {
        run_chunk(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    const std::size_t chunk = (n + nthreads - 1) / nthreads;
    for (std::size_t t = 0; t < nthreads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&run_chunk, begin, end] { run_chunk(begin, end); });
    }
    for (auto& th : pool) th.join();
}

} // namespace craft
