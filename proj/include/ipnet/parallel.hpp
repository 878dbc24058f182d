#pragma once

#include <atomic>
#include <functional>
#include <thread>
#include <vector>

namespace ipnet {

// Runs fn(i, worker) for i in [0, n). Each index must write only to its own
// output slot; reductions happen after the join, in index order, so results
// are bit-identical to a serial run regardless of the thread count.
inline void parallel_for(int n, int threads,
                         const std::function<void(int, int)>& fn) {
  if (n <= 0) return;
  if (threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  const int workers = std::min(threads, n);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (;;) {
        const int i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= n) break;
        fn(i, w);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace ipnet
