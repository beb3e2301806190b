#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace vac {

inline unsigned effective_threads(int requested) {
    if (requested > 0) return static_cast<unsigned>(requested);
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1u;
}

// Runs body(begin, end, thread_index) over contiguous slices of [0, n).
// Slice boundaries depend only on (n, threads), so output placement is
// deterministic for a fixed thread count; threads == 1 runs inline.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
    if (n == 0) return;
    if (threads <= 1 || n == 1) {
        body(std::size_t(0), n, 0u);
        return;
    }
    const unsigned t = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    std::vector<std::thread> workers;
    workers.reserve(t);
    for (unsigned i = 0; i < t; ++i) {
        const std::size_t begin = n * i / t;
        const std::size_t end = n * (i + 1) / t;
        workers.emplace_back([&body, begin, end, i] { body(begin, end, i); });
    }
    for (auto& w : workers) w.join();
}

} // namespace vac
