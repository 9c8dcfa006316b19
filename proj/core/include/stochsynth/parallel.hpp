#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace stochsynth {

/// Worker count: explicit value if > 0, else STOCHSYNTH_THREADS, else hardware.
inline std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("STOCHSYNTH_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs fn(begin, end) over contiguous chunks of [0, n). Chunk boundaries do
/// not depend on scheduling, so callers writing to per-index slots get
/// identical results for any thread count.
template <class Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::min(resolve_threads(threads), std::max<std::size_t>(n, 1));
  if (threads <= 1 || n < 2) {
    if (n > 0) fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::jthread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const std::size_t chunk = (n + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

/// Sum of values[0..n) in a fixed pairwise order.
template <class T>
T pairwise_sum(const T* values, std::size_t n) {
  if (n == 0) return T{};
  if (n <= 8) {
    T acc = values[0];
    for (std::size_t i = 1; i < n; ++i) acc += values[i];
    return acc;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(values, half) + pairwise_sum(values + half, n - half);
}

}  // namespace stochsynth
