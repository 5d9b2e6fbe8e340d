#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace icogs {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work is split into
/// contiguous chunks; callers that need deterministic results must write to
/// disjoint, index-addressed outputs.
template <typename Fn>
void parallel_for(size_t n, int threads, Fn&& fn) {
  const size_t workers = std::min<size_t>(n, static_cast<size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const size_t chunk = (n + workers - 1) / workers;
  for (size_t w = 0; w < workers; ++w) {
    const size_t begin = w * chunk;
    const size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&fn, begin, end] {
      for (size_t i = begin; i < end; ++i) fn(i);
    });
  }
}

} // namespace icogs
