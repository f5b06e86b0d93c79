#pragma once

#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace charlab {

/// Worker count from CHARLAB_THREADS (0 or unset means hardware
/// concurrency). The value only caps scheduling; results are assembled by
/// index, so output is identical for every setting.
inline unsigned thread_cap() {
    if (const char* env = std::getenv("CHARLAB_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/**
 * Run fn(i) for i in [0, count). Each index must write only to its own
 * output slot. The first exception (lowest index) is rethrown after all
 * workers join.
 */
inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
    unsigned threads = thread_cap();
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    if (threads > count) threads = static_cast<unsigned>(count);
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += threads) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

}  // namespace charlab
