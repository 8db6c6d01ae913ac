#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <thread>
#include <type_traits>
#include <vector>

namespace fluctlab {

inline std::size_t default_workers() { return std::max<std::size_t>(1, std::thread::hardware_concurrency()); }

// Runs fn(0..count-1) on at most `workers` threads. Results are stored by
// index, so the output does not depend on the worker count or scheduling.
// The exception of the lowest failing index is rethrown.
template <class F>
auto parallel_map(std::size_t count, std::size_t workers, F&& fn) {
  using R = std::invoke_result_t<F&, std::size_t>;
  std::vector<std::optional<R>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    body();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<R> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace fluctlab
