#pragma once

// Index-parallel loop over a fixed worker count. Callers write results into
// preallocated slots by index, so output order never depends on scheduling.

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace otto::detail {

template <class Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline int default_workers() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

}  // namespace otto::detail
