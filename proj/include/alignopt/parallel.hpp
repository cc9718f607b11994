// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace alignopt {

/// Calls fn(i) for i in [0, count) on up to `workers` threads. Callers write
/// results by index, so output never depends on scheduling. If several calls
/// throw, the exception from the lowest index is rethrown.
template <typename Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  if (count <= 0) return;
  workers = std::clamp(workers, 1, count);
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto work = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace alignopt
