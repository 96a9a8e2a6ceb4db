#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace focus {

/// 0 means "use hardware concurrency".
inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) over a static partition. Callers write results
/// into preallocated slots indexed by i, so output never depends on the
/// thread count. The first exception thrown by any worker is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(resolve_threads(threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

/// Pairwise summation over a fixed tree; the result depends only on the input
/// order, never on how the terms were produced.
template <typename T, typename Get>
T pairwise_sum(std::size_t begin, std::size_t end, const T& zero, Get&& get) {
  if (end <= begin) return zero;
  if (end - begin <= 8) {
    T acc = zero;
    for (std::size_t i = begin; i < end; ++i) acc += get(i);
    return acc;
  }
  const std::size_t mid = begin + (end - begin) / 2;
  T left = pairwise_sum(begin, mid, zero, get);
  left += pairwise_sum(mid, end, zero, get);
  return left;
}

}  // namespace focus
