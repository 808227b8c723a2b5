#pragma once

#include <cstddef>
#include <algorithm>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace camel {

/// Runs body(i) for i in [0, n) on up to `threads` threads with a static
/// round-robin split. Callers write into disjoint per-index slots and reduce
/// afterwards in index order, so results do not depend on the thread count.
template <class Body>
void parallel_for(size_t n, int threads, Body&& body) {
    const size_t t = threads < 1 ? 1 : static_cast<size_t>(threads);
    if (t == 1 || n < 2) {
        for (size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr error;
    std::mutex error_mutex;
    {
        std::vector<std::jthread> pool;
        for (size_t k = 0; k < std::min(t, n); ++k)
            pool.emplace_back([&, k] {
                try {
                    for (size_t i = k; i < n; i += t) body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            });
    }
    if (error) std::rethrow_exception(error);
}

} // namespace camel
