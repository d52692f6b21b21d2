#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace mfbm {

namespace detail {
inline std::atomic<std::size_t>& worker_override() {
    static std::atomic<std::size_t> n{0};
    return n;
}
}  // namespace detail

// 0 clears the override and falls back to MFBM_WORKERS, then to hardware concurrency.
inline void set_worker_count(std::size_t n) { detail::worker_override() = n; }

inline std::size_t worker_count() {
    if (std::size_t n = detail::worker_override(); n > 0) return n;
    if (const char* env = std::getenv("MFBM_WORKERS")) {
        char* end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) over contiguous chunks. Each index must write only
// its own output slot; reductions are done serially by the caller, which keeps
// results independent of the worker count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1 || n < 64) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t lo = n * w / workers, hi = n * (w + 1) / workers;
        pool.emplace_back([&, lo, hi, w] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// One generator per (seed, path, stream); stream separates independent uses.
inline std::mt19937_64 path_rng(std::uint64_t seed, std::uint64_t path, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32),
                      static_cast<std::uint32_t>(stream)};
    return std::mt19937_64(seq);
}

namespace stream {
inline constexpr std::uint64_t brownian = 1;
inline constexpr std::uint64_t fgn = 2;
inline constexpr std::uint64_t initial = 3;
inline constexpr std::uint64_t probe = 4;
inline constexpr std::uint64_t perturbation = 5;
}  // namespace stream

}  // namespace mfbm
