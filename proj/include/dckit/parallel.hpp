#pragma once

// Index-ordered parallel map. Results land in slot i regardless of the
// schedule, so callers that reduce in index order are schedule-independent.

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace dckit {

/// Thread cap: explicit request if positive, else DCKIT_THREADS, else hardware.
inline int resolve_threads(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DCKIT_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// out[i] = fn(i) for i in [0, count). If any call throws, the exception of
/// the lowest failing index is rethrown after all workers finish.
template <class R, class Fn>
std::vector<R> parallel_map(std::size_t count, Fn&& fn, int threads = 0) {
  std::vector<R> out(count);
  std::vector<std::exception_ptr> errors(count);
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(resolve_threads(threads)));
  auto run = [&](std::size_t i) {
    try {
      out[i] = fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) run(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace dckit
