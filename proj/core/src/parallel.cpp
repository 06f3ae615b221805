#include "signspot/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace signspot {

namespace {
std::atomic<int> g_num_threads{0};
thread_local bool t_in_worker = false;

int resolve_threads() {
  int n = g_num_threads.load();
  if (n > 0) return n;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}
}  // namespace

void set_num_threads(int n) { g_num_threads.store(n < 0 ? 0 : n); }

int num_threads() { return resolve_threads(); }

bool in_parallel_worker() { return t_in_worker; }

void parallel_for(int64_t count, const std::function<void(int64_t)>& fn) {
  if (count <= 0) return;
  int workers = resolve_threads();
  if (workers <= 1 || count == 1 || t_in_worker) {
    for (int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  workers = static_cast<int>(std::min<int64_t>(workers, count));
  const int64_t chunk = (count + workers - 1) / workers;

  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(workers));
  std::exception_ptr error;
  std::atomic<bool> failed{false};

  for (int w = 0; w < workers; ++w) {
    const int64_t lo = static_cast<int64_t>(w) * chunk;
    const int64_t hi = std::min(count, lo + chunk);
    if (lo >= hi) break;
    threads.emplace_back([&, lo, hi] {
      t_in_worker = true;
      try {
        for (int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
      }
      t_in_worker = false;
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace signspot
