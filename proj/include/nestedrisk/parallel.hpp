#pragma once

#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace nestedrisk {

inline unsigned default_thread_count() {
    if (const char* env = std::getenv("NESTED_RISK_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1u : hw;
}

// Runs fn(block_index, begin, end) over fixed-size blocks of [0, total).
// Block boundaries depend only on total and block_size, never on the worker
// count, so any per-block outputs can be reduced in block order to give
// results that are invariant under the number of threads.
template <typename Fn>
void for_blocks(std::size_t total, std::size_t block_size, unsigned threads, Fn&& fn) {
    if (total == 0) return;
    if (block_size == 0) block_size = 1;
    const std::size_t nblocks = (total + block_size - 1) / block_size;
    if (threads <= 1 || nblocks == 1) {
        for (std::size_t b = 0; b < nblocks; ++b) {
            const std::size_t lo = b * block_size;
            const std::size_t hi = std::min(total, lo + block_size);
            fn(b, lo, hi);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= nblocks) return;
            const std::size_t lo = b * block_size;
            const std::size_t hi = std::min(total, lo + block_size);
            fn(b, lo, hi);
        }
    };
    std::vector<std::thread> pool;
    const unsigned spawned = static_cast<unsigned>(
        std::min<std::size_t>(threads, nblocks));
    pool.reserve(spawned);
    for (unsigned t = 1; t < spawned; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
}

// Convenience: one item per call, blocks chosen for reasonable granularity.
template <typename Fn>
void parallel_for_each(std::size_t total, unsigned threads, Fn&& fn) {
    std::size_t block = 1;
    if (threads > 1 && total > threads) {
        block = std::max<std::size_t>(1, total / (static_cast<std::size_t>(threads) * 8));
    }
    for_blocks(total, block, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
}

}  // namespace nestedrisk
