#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace garlic {

namespace detail {
inline std::atomic<std::size_t>& thread_cap() {
  static std::atomic<std::size_t> cap{std::max(1u, std::thread::hardware_concurrency())};
  return cap;
}
}  // namespace detail

/// Caps the worker count used by every parallel loop. 0 restores the
/// hardware default. Results never depend on this value: work is always cut
/// into the same chunks and reduced in chunk order.
inline void set_num_threads(std::size_t n) {
  detail::thread_cap() = n == 0 ? std::max(1u, std::thread::hardware_concurrency()) : n;
}

inline std::size_t num_threads() { return detail::thread_cap(); }

/// Splits [0, n) into `chunks` contiguous ranges. The partition depends only
/// on n and chunks.
struct ChunkPlan {
  std::size_t n = 0;
  std::size_t chunks = 0;

  ChunkPlan(std::size_t total, std::size_t max_chunks)
      : n(total), chunks(std::max<std::size_t>(1, std::min(total, max_chunks))) {}

  std::size_t begin(std::size_t c) const { return n * c / chunks; }
  std::size_t end(std::size_t c) const { return n * (c + 1) / chunks; }
};

/// Runs fn(chunk, begin, end) for every chunk of the plan. Chunks are handed
/// to at most num_threads() workers; the first exception is rethrown.
template <typename Fn>
void parallel_chunks(const ChunkPlan& plan, Fn&& fn) {
  const std::size_t workers = std::min(num_threads(), plan.chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < plan.chunks; ++c) fn(c, plan.begin(c), plan.end(c));
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t c = next++; c < plan.chunks; c = next++) {
      try {
        fn(c, plan.begin(c), plan.end(c));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Element-wise loop; each index is visited exactly once.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, std::size_t max_chunks = 64) {
  parallel_chunks(ChunkPlan(n, max_chunks), [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace garlic
