#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace splatam {

/// Runs fn(begin..end) split into contiguous chunks across n_threads.
/// With n_threads <= 1 (or a trivially small range) the call is a plain
/// sequential loop on the calling thread, so results stay deterministic.
template <typename Fn>
void parallel_for(int begin, int end, int n_threads, Fn&& fn) {
  const int n = end - begin;
  if (n <= 0) return;
  if (n_threads <= 1 || n == 1) {
    for (int i = begin; i < end; ++i) fn(i);
    return;
  }
  const int workers = std::min(n_threads, n);
  const int chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    const int lo = begin + w * chunk;
    const int hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (int i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace splatam
