#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

namespace defocus {

// 2D aperture-plane coordinate. x is the horizontal axis, y the vertical one,
// matching image (column, row) order.
struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

namespace detail {

inline std::atomic<int>& thread_count_storage() {
    static std::atomic<int> count{0};
    return count;
}

inline int default_thread_count() {
    if (const char* env = std::getenv("DEFOCUS_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

} // namespace detail

/// Number of worker threads used by parallel loops. Defaults to
/// DEFOCUS_THREADS if set, otherwise hardware concurrency.
inline int thread_count() {
    int n = detail::thread_count_storage().load(std::memory_order_relaxed);
    if (n == 0) {
        n = detail::default_thread_count();
        detail::thread_count_storage().store(n, std::memory_order_relaxed);
    }
    return n;
}

inline void set_thread_count(int n) {
    detail::thread_count_storage().store(std::max(1, n), std::memory_order_relaxed);
}

/// Number of chunks parallel_chunks will use for a loop of length n.
inline int chunk_count(std::int64_t n) {
    if (n <= 0) return 0;
    return static_cast<int>(std::min<std::int64_t>(thread_count(), n));
}

/// Runs fn(chunk_index, begin, end) over a fixed partition of [0, n) into
/// thread_count() contiguous chunks. The partition depends only on n and the
/// thread count, so results that reduce per chunk in chunk order are
/// reproducible run-to-run.
template <class F>
inline int parallel_chunks(std::int64_t n, F&& fn) {
    if (n <= 0) return 0;
    int chunks = chunk_count(n);
    if (chunks <= 1) {
        fn(0, std::int64_t{0}, n);
        return 1;
    }
    std::vector<std::thread> pool;
    pool.reserve(chunks - 1);
    std::int64_t per = n / chunks;
    std::int64_t rem = n % chunks;
    std::int64_t begin = 0;
    for (int c = 0; c < chunks; ++c) {
        std::int64_t end = begin + per + (c < rem ? 1 : 0);
        if (c + 1 == chunks) {
            fn(c, begin, end);
        } else {
            pool.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
        }
        begin = end;
    }
    for (auto& t : pool) t.join();
    return chunks;
}

/// Element-parallel loop: fn(i) for i in [0, n).
template <class F>
inline void parallel_for(std::int64_t n, F&& fn) {
    parallel_chunks(n, [&fn](int, std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) fn(i);
    });
}

/// Deterministic chunked reduction: sums fn(i) per chunk, then adds the chunk
/// partials in chunk order.
template <class F>
inline double parallel_sum(std::int64_t n, F&& fn) {
    if (n <= 0) return 0.0;
    std::vector<double> partial(static_cast<size_t>(chunk_count(n)), 0.0);
    int chunks = parallel_chunks(n, [&](int c, std::int64_t begin, std::int64_t end) {
        double acc = 0.0;
        for (std::int64_t i = begin; i < end; ++i) acc += fn(i);
        partial[static_cast<size_t>(c)] = acc;
    });
    double total = 0.0;
    for (int c = 0; c < chunks; ++c) total += partial[static_cast<size_t>(c)];
    return total;
}

} // namespace defocus
