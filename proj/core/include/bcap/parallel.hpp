#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace bcap {

// Run fn(0..n_tasks-1) on up to `jobs` threads. Tasks must synchronize their
// own outputs (write to per-index slots). The first exception (lowest task
// index) is rethrown after all workers finish. jobs <= 1 runs inline.
inline void parallel_for(int n_tasks, int jobs,
                         const std::function<void(int)>& fn) {
  if (n_tasks <= 0) return;
  if (jobs <= 1 || n_tasks == 1) {
    for (int i = 0; i < n_tasks; ++i) fn(i);
    return;
  }
  const int workers = std::min(jobs, n_tasks);
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(n_tasks));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n_tasks) return;
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace bcap
