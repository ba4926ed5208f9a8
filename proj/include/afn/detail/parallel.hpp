#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace afn::detail {

/// Runs fn(0..count-1) across `workers` threads with static index chunking.
/// Callers write results into index-addressed slots, so the output is
/// identical for any worker count. The first exception wins and is rethrown.
inline void parallel_for(int workers, std::int64_t count,
                         const std::function<void(std::int64_t)>& fn) {
    if (count <= 0) return;
    if (workers <= 1 || count == 1) {
        for (std::int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const int nthreads = static_cast<int>(std::min<std::int64_t>(workers, count));
    std::vector<std::exception_ptr> errors(nthreads);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) {
        pool.emplace_back([&, t]() {
            try {
                for (std::int64_t i = t; i < count; i += nthreads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace afn::detail
