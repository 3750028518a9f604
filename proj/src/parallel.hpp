#pragma once

#include <cstddef>
#include <exception>

namespace vrepair::detail {

/// Runs body(i) for i in [0, n) on the OpenMP team. An exception thrown by
/// any iteration is rethrown on the calling thread after the loop.
template <class F>
void parallel_for(std::size_t n, F&& body) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(vrepair_parallel_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace vrepair::detail
