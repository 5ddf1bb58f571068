#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace immersoflow {

namespace detail {
inline std::atomic<int>& thread_setting()
{
    static std::atomic<int> value{0};
    return value;
}
} // namespace detail

/// Caps the number of workers used by `parallel_for`. Zero means "use
/// IMMERSOFLOW_THREADS, else hardware concurrency".
inline void set_thread_count(int count) { detail::thread_setting() = std::max(0, count); }

inline int thread_count()
{
    if (int n = detail::thread_setting(); n > 0) {
        return n;
    }
    if (const char* env = std::getenv("IMMERSOFLOW_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) {
            return n;
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, count). Each index is processed exactly once and
/// results must be written to per-index storage; callers reduce afterwards in
/// index order, which keeps outputs independent of the worker count.
template <typename Body>
void parallel_for(std::size_t count, Body&& body)
{
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failureMutex;
    auto worker = [&] {
        try {
            for (std::size_t i = next++; i < count; i = next++) {
                body(i);
            }
        } catch (...) {
            std::lock_guard lock(failureMutex);
            if (!failure) {
                failure = std::current_exception();
            }
            next = count;
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        pool.emplace_back(worker);
    }
    worker();
    pool.clear();
    if (failure) {
        std::rethrow_exception(failure);
    }
}

} // namespace immersoflow
