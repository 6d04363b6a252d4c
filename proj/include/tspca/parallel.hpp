#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace tspca {

/// Worker count from TSPCA_WORKERS, else the hardware concurrency.
inline std::size_t default_workers() {
    if (const char* env = std::getenv("TSPCA_WORKERS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, count) on up to `workers` threads (0 = default).
/// Tasks are claimed dynamically, so fn must write only to slot i of its
/// outputs; results then do not depend on scheduling. The first exception
/// thrown by any task is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
    if (workers == 0) workers = default_workers();
    workers = std::min(workers, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const auto i = next.fetch_add(1);
            if (i >= count || abort.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                abort = true;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

} // namespace tspca
