#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pulseforge {

/// Thread count from `requested`, falling back to PULSEFORGE_THREADS and then
/// to the hardware concurrency. Always at least 1.
int resolve_threads(int requested = 0);

/// Runs body(i) for i in [0, count) on up to `threads` threads. Work is split
/// into contiguous blocks; the first exception thrown is rethrown.
template <typename Body>
void parallel_for(std::size_t count, int threads, Body&& body) {
    const auto n_threads = static_cast<std::size_t>(std::max(1, threads));
    if (n_threads == 1 || count < 2) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    const std::size_t used = std::min(n_threads, count);
    pool.reserve(used);
    for (std::size_t t = 0; t < used; ++t) {
        pool.emplace_back([&, t] {
            for (std::size_t i = t; i < count; i += used) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace pulseforge
