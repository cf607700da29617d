#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace provfilter {

// Deterministic static partition; results must be written by index.
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn,
                         unsigned num_threads = 0) {
    if (num_threads == 0)
        num_threads = std::max(1u, std::thread::hardware_concurrency());
    if (n == 0) return;
    if (num_threads <= 1 || n == 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> workers;
    std::atomic<size_t> next{0};
    auto body = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    unsigned t = std::min<size_t>(num_threads, n);
    workers.reserve(t);
    for (unsigned w = 0; w < t; ++w) workers.emplace_back(body);
    for (auto& th : workers) th.join();
}

}  // namespace provfilter
