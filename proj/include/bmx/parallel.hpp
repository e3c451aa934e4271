#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace bmx {

/// Worker count: BMX_MAX_THREADS if set, else the hardware concurrency.
inline unsigned max_threads() {
    if (const char* e = std::getenv("BMX_MAX_THREADS")) {
        const long v = std::strtol(e, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [0, n) on up to max_threads() workers, strided by index.
/// The first exception thrown by any worker is rethrown after all have joined.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(max_threads(), n));
    if (n_threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_threads);
    for (unsigned t = 0; t < n_threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += n_threads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace bmx
