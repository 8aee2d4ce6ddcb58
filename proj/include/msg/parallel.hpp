#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace msg::parallel {

// Apply `fn(i)` for i in [0, n) across up to `concurrency` threads. Results
// land in caller-owned slots indexed by i, so the outcome is independent of
// scheduling.
inline void for_indices(size_t n, size_t concurrency, const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  size_t workers = std::max<size_t>(1, std::min(concurrency, n));
  if (workers == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w]() {
      for (size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

}  // namespace msg::parallel
