#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace hymik {

// Worker count: HYMIK_THREADS env if set (>=1), else hardware concurrency.
// set_thread_count overrides (CLI flag wins over the env variable).
inline int& detail_thread_count() {
  static int n = [] {
    if (const char* env = std::getenv("HYMIK_THREADS")) {
      const int v = std::atoi(env);
      if (v >= 1) return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
  }();
  return n;
}

inline int thread_count() { return detail_thread_count(); }
inline void set_thread_count(int n) {
  if (n >= 1) detail_thread_count() = n;
}

// Runs fn(i) for i in [0, n). Iterations must be independent; callers keep
// determinism by writing to disjoint slots only. Exceptions propagate (first
// one wins, remaining iterations are abandoned).
template <class Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  if (n <= 0) return;
  const int nt = static_cast<int>(std::min<std::int64_t>(thread_count(), n));
  if (nt <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::int64_t chunk = std::max<std::int64_t>(1, n / (8 * nt));
  std::atomic<std::int64_t> next(0);
  std::atomic<bool> failed(false);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  auto worker = [&] {
    for (;;) {
      const std::int64_t lo = next.fetch_add(chunk);
      if (lo >= n || failed.load(std::memory_order_relaxed)) return;
      const std::int64_t hi = std::min(n, lo + chunk);
      try {
        for (std::int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nt - 1);
  for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace hymik
