#pragma once

#include <exception>
#include <mutex>

namespace esde {

/// Runs fn(i) for i in [0, n), in parallel when OpenMP is enabled. Every index
/// is independent; the exception from the lowest failing index is rethrown.
template <typename Fn>
void parallel_for(long long n, Fn&& fn) {
  std::exception_ptr error;
  long long error_index = n;
  std::mutex guard;
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < n; ++i) {
    try {
      fn(i);
    } catch (...) {
      std::lock_guard lock(guard);
      if (i < error_index) {
        error_index = i;
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace esde
