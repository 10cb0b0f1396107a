#pragma once

#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace camcls {

// Worker cap from CAMCLS_THREADS. Unset or 0 means serial, which keeps
// runs reproducible by default.
inline size_t worker_count() {
  const char* env = std::getenv("CAMCLS_THREADS");
  if (!env) return 1;
  const long n = std::strtol(env, nullptr, 10);
  return n <= 1 ? 1 : static_cast<size_t>(n);
}

// Index-parallel loop; results must be written to caller-owned slots so
// the outcome does not depend on scheduling.
inline void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
  const size_t workers = std::min(worker_count(), n);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t]() {
      for (size_t i = t; i < n; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace camcls
