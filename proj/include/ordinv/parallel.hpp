#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ordinv {

/// Calls fn(i) for i in [0, n) on up to `threads` workers. Work items are
/// claimed dynamically; callers write results by index so the outcome does not
/// depend on scheduling. The first exception thrown is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(error_mutex);
                        if (!error) error = std::current_exception();
                    }
                }
            });
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace ordinv
