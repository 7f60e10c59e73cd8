#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace flagifs {

/// Process-wide worker count; 0 means one per available core.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs fn(i) for i in [0, count) over contiguous static chunks. Callers
/// write results into slot i and reduce afterwards in index order, so the
/// outcome never depends on the number of workers.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn)
{
    const std::size_t workers = std::min<std::size_t>(thread_count(), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (count + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace flagifs
