#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pointprop {

inline std::size_t default_worker_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

namespace detail {
// Set on threads currently running parallel_for chunks; nested calls run inline.
inline thread_local bool in_parallel_region = false;

struct RegionGuard {
  bool previous = in_parallel_region;
  RegionGuard() { in_parallel_region = true; }
  ~RegionGuard() { in_parallel_region = previous; }
};
}  // namespace detail

/// Calls body(chunk_begin, chunk_end) over [begin, end) split into chunks of
/// `grain`, distributing chunks over worker threads. The first exception thrown
/// by any chunk is rethrown on the calling thread.
template <class Body>
void parallel_for(std::size_t begin, std::size_t end, std::size_t grain, Body&& body,
                  std::size_t workers = default_worker_count()) {
  if (begin >= end) return;
  grain = std::max<std::size_t>(grain, 1);
  const std::size_t chunks = (end - begin + grain - 1) / grain;
  workers = detail::in_parallel_region ? 1 : std::clamp<std::size_t>(workers, 1, chunks);
  if (workers == 1) {
    for (std::size_t lo = begin; lo < end; lo += grain) body(lo, std::min(end, lo + grain));
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    const detail::RegionGuard guard;
    for (;;) {
      const std::size_t chunk = next.fetch_add(1);
      if (chunk >= chunks) return;
      const std::size_t lo = begin + chunk * grain;
      try {
        body(lo, std::min(end, lo + grain));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(chunks);
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t i = 1; i < workers; ++i) pool.emplace_back(worker);
  worker();
  pool.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace pointprop
