#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace ppd {

/// Worker count to use when the caller passes 0.
inline int default_workers() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

/// Splits [0, n) into `workers` contiguous blocks and runs fn(begin, end, worker)
/// on each, the first block on the calling thread.
template <typename Fn>
void parallel_blocks(std::size_t n, int workers, Fn&& fn) {
    if (workers <= 0) workers = default_workers();
    const auto w = static_cast<std::size_t>(std::max(1, std::min<int>(workers, static_cast<int>(std::max<std::size_t>(n, 1)))));
    if (w == 1) {
        fn(std::size_t{0}, n, 0);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(w - 1);
    for (std::size_t k = 1; k < w; ++k) {
        pool.emplace_back([&fn, n, w, k] { fn(n * k / w, n * (k + 1) / w, static_cast<int>(k)); });
    }
    fn(std::size_t{0}, n / w, 0);
}

}  // namespace ppd
