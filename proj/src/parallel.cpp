#include "tamperloc/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace tamperloc {

namespace {

int initial_workers() {
  if (const char* env = std::getenv("TAMPERLOC_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 4u));
}

std::atomic<int>& worker_slot() {
  static std::atomic<int> workers{initial_workers()};
  return workers;
}

}  // namespace

int max_workers() { return worker_slot().load(std::memory_order_relaxed); }

void set_max_workers(int n) {
  worker_slot().store(std::max(1, n), std::memory_order_relaxed);
}

void parallel_for(Index count, const std::function<void(Index, Index)>& fn) {
  if (count <= 0) return;
  const Index workers = std::min<Index>(max_workers(), count);
  if (workers <= 1) {
    fn(0, count);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  const Index chunk = (count + workers - 1) / workers;
  for (Index t = 0; t < workers; ++t) {
    const Index begin = t * chunk;
    const Index end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace tamperloc
