#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

namespace rulgp {

enum class Execution { Serial, Parallel };

/// Runs fn(i) for i in [0, n). Under Execution::Parallel the iterations are
/// spread over an OpenMP team; the first exception thrown by any iteration
/// is rethrown on the calling thread after the loop joins.
template <class Fn>
void for_each_index(std::size_t n, Execution exec, Fn&& fn) {
  if (exec == Execution::Serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex guard;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(guard);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace rulgp
