#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace pppbayes {

// Worker cap: PPP_THREADS if set and positive, else hardware concurrency.
inline unsigned thread_count() {
  if (const char* env = std::getenv("PPP_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n). Each index must write only its own outputs;
// the first exception thrown by any index is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(thread_count(), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// Fixed-size blocks independent of the worker count, so reductions that sum
// per-block partials in block order give identical bits for any PPP_THREADS.
inline constexpr std::size_t kReductionBlock = 1024;

template <typename Partial, typename BlockFn, typename Combine>
Partial blocked_reduce(std::size_t n, Partial init, BlockFn&& block_fn, Combine&& combine) {
  const std::size_t blocks = (n + kReductionBlock - 1) / kReductionBlock;
  std::vector<Partial> partials(blocks, init);
  parallel_for(blocks, [&](std::size_t b) {
    const std::size_t lo = b * kReductionBlock;
    const std::size_t hi = std::min(n, lo + kReductionBlock);
    partials[b] = block_fn(lo, hi);
  });
  Partial acc = init;
  for (auto& p : partials) acc = combine(std::move(acc), p);
  return acc;
}

}  // namespace pppbayes
