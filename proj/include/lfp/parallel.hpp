#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace lfp {

/// Run fn(i) for i in [0, n) on up to `workers` threads (0 = hardware count).
/// Tasks must write disjoint state. The lowest-index exception is rethrown,
/// so failures are reported deterministically regardless of thread timing.
inline void parallel_for(long n, int workers, const std::function<void(long)>& fn) {
  if (n <= 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  long count = workers > 0 ? workers : static_cast<long>(hw);
  count = std::min<long>(count, n);
  if (count <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next(0);
  std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(count));
  for (long w = 0; w < count; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const long i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace lfp
