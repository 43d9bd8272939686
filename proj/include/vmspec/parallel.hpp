#pragma once

#include <algorithm>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace vmspec {

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index must write
// only its own output slot; the first exception is rethrown on the caller.
inline void parallel_for(long n, int jobs, const std::function<void(long)>& fn) {
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(std::min<long>(n, 1L << 20))));
  if (jobs <= 1 || n < 2) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (long i = t; i < n; i += jobs) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace vmspec
