#pragma once

// Batched parallel map with a fixed batch size. Each batch writes only its own
// slots, and reductions are summed in batch order, so results do not depend on
// the number of threads.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace diffks {

inline constexpr std::size_t kBatchSize = 512;

// Worker count: DIFFKS_THREADS if set and positive, else hardware concurrency.
inline unsigned thread_count() {
  if (const char *env = std::getenv("DIFFKS_THREADS")) {
    try {
      const long n = std::stol(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (...) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Calls fn(batch_index, begin, end) for every batch of [0, n).
template <class Fn>
void parallel_batches(std::size_t n, Fn &&fn, std::size_t batch = kBatchSize) {
  const std::size_t nbatch = (n + batch - 1) / batch;
  const unsigned nthreads =
      static_cast<unsigned>(std::min<std::size_t>(thread_count(), nbatch));
  auto run = [&](std::size_t b) {
    const std::size_t begin = b * batch;
    fn(b, begin, std::min(n, begin + batch));
  };
  if (nthreads <= 1) {
    for (std::size_t b = 0; b < nbatch; ++b) run(b);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(nthreads);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (unsigned t = 0; t < nthreads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t b = next++; b < nbatch; b = next++) run(b);
      } catch (...) {
        errors[t] = std::current_exception();
        next = nbatch;
      }
    });
  }
  for (auto &th : pool) th.join();
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::size_t batch_count(std::size_t n, std::size_t batch = kBatchSize) {
  return (n + batch - 1) / batch;
}

}  // namespace diffks
