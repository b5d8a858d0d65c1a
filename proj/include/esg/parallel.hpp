#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace esg {

// Runs fn(i) for every i in [0, n) on at most `parallelism` threads. fn must
// not throw; callers catch per item.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t parallelism, Fn&& fn)
{
    const std::size_t workers = std::min(std::max<std::size_t>(parallelism, 1), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
}

}  // namespace esg
