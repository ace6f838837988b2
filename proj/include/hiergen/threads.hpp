#pragma once

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace hiergen {

// worker count capped by the HIERGEN_THREADS environment variable
inline int worker_thread_count() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* cap = std::getenv("HIERGEN_THREADS")) {
    const int c = std::atoi(cap);
    if (c >= 1 && c < n) n = c;
  }
  return n;
}

// runs f(i) for i in [0, n) on worker threads; callers write results into
// index-addressed slots so the output is deterministic
template <typename F>
void parallel_for(int n, F f) {
  const int workers = std::min(worker_thread_count(), n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        f(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace hiergen
