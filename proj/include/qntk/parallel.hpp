#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace qntk {

// Number of worker threads, capped by the QNTK_THREADS environment variable.
inline std::size_t thread_count() {
  std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("QNTK_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) hw = std::min<std::size_t>(hw, static_cast<std::size_t>(v));
  }
  return hw;
}

// Runs fn(begin, end) over fixed-size chunks of [0, total). Chunk boundaries
// depend only on `total` and `chunk`, never on the thread count, so any
// chunkwise partial results combine identically for every QNTK_THREADS value.
template <typename Fn>
void parallel_chunks(std::size_t total, std::size_t chunk, Fn&& fn) {
  if (total == 0) return;
  chunk = std::max<std::size_t>(1, chunk);
  const std::size_t nchunks = (total + chunk - 1) / chunk;
  const std::size_t workers = std::min(thread_count(), nchunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c)
      fn(c * chunk, std::min(total, (c + 1) * chunk));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  auto work = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= nchunks || failed.load()) return;
      try {
        fn(c * chunk, std::min(total, (c + 1) * chunk));
      } catch (...) {
        if (!failed.exchange(true)) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failed.load() && error) std::rethrow_exception(error);
}

// Convenience: one index per call.
template <typename Fn>
void parallel_for(std::size_t total, Fn&& fn, std::size_t chunk = 64) {
  parallel_chunks(total, chunk, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) fn(i);
  });
}

}  // namespace qntk
