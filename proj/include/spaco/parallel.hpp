#pragma once

#include <algorithm>
#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace spaco {

// Process-wide worker count (0 = hardware concurrency).  Set once by the CLI;
// library code only reads it.
inline std::atomic<int>& thread_count() {
    static std::atomic<int> n{0};
    return n;
}

inline void set_num_threads(int n) { thread_count().store(n); }

inline int num_threads() {
    int n = thread_count().load();
    if (n > 0) return n;
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Static-partition parallel loop.  Bodies must write only to disjoint,
// preallocated slots so the result is independent of the thread count;
// callers do any order-sensitive reduction sequentially afterwards.
inline void parallel_for(int begin, int end, const std::function<void(int)>& body) {
    const int n = end - begin;
    if (n <= 0) return;
    const int workers = std::min(num_threads(), n);
    if (workers <= 1) {
        for (int i = begin; i < end; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::atomic<int> next{begin};
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (int i = next.fetch_add(1); i < end; i = next.fetch_add(1)) body(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace spaco
