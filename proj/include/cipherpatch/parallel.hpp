#pragma once

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace cipherpatch {

// Worker count for data-parallel loops: CIPHERPATCH_THREADS if set (minimum
// 1), otherwise the hardware concurrency.
inline int thread_budget() {
  if (const char* env = std::getenv("CIPHERPATCH_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
    return 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Each index must write only its own output
// slot; results are then independent of the thread count, so outputs stay
// deterministic whether this runs on 1 thread or 16.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(thread_budget()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace cipherpatch
