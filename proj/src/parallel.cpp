#include "convscope/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace convscope {

namespace {

std::atomic<int> g_threads{0};

int resolve_threads() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n > 0) return n;
  static int from_env = [] {
    if (const char* e = std::getenv("CONVSCOPE_THREADS")) {
      int v = std::atoi(e);
      if (v > 0) return v;
    }
    return 0;
  }();
  if (from_env > 0) return from_env;
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace

void set_thread_count(int n) { g_threads.store(n, std::memory_order_relaxed); }

int thread_count() { return resolve_threads(); }

void parallel_for(size_t n, const std::function<void(size_t, size_t)>& fn) {
  if (n == 0) return;
  size_t workers = static_cast<size_t>(resolve_threads());
  workers = std::min(workers, n);
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (size_t t = 1; t < workers; ++t) {
    size_t begin = t * chunk;
    size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(fn, begin, end);
  }
  fn(0, std::min(n, chunk));
  for (auto& th : pool) th.join();
}

}  // namespace convscope
