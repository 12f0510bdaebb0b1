#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace dclsim {

/// Worker count honoring the DCLSIM_THREADS env var (0 or unset = auto).
inline unsigned thread_count() {
  unsigned n = 0;
  if (const char* env = std::getenv("DCLSIM_THREADS")) {
    n = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
  }
  if (n == 0) n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

/// Runs fn(i) for i in [0, count) across threads. Callers own determinism:
/// fn(i) must write only to slot i of a preallocated output, and reductions
/// happen afterwards in index order.
inline void parallel_for(std::size_t count,
                         const std::function<void(std::size_t)>& fn) {
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(thread_count(), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += workers) fn(i);
    });
  }
  for (std::thread& th : pool) th.join();
}

}  // namespace dclsim
