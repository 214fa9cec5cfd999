#pragma once

#include <cstddef>
#include <exception>
#include <limits>
#include <utility>

#include <omp.h>

namespace dms {

void set_thread_cap_from_env();
int max_threads();

struct ArgMax {
  double value = -std::numeric_limits<double>::infinity();
  std::size_t index = 0;
  bool empty = true;
};

// Max of f(i) over [0, n); ties resolve to the lowest index, so the result
// does not depend on the thread count.
template <class F>
ArgMax parallel_argmax(std::size_t n, F&& f) {
  ArgMax best;
  std::exception_ptr err;
#pragma omp parallel
  {
    ArgMax local;
#pragma omp for schedule(dynamic, 16) nowait
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
      double v;
      try {
        v = f(static_cast<std::size_t>(i));
      } catch (...) {
#pragma omp critical(dms_err)
        if (!err) err = std::current_exception();
        continue;
      }
      if (local.empty || v > local.value || (v == local.value && static_cast<std::size_t>(i) < local.index)) {
        local.value = v;
        local.index = static_cast<std::size_t>(i);
        local.empty = false;
      }
    }
#pragma omp critical
    {
      if (!local.empty &&
          (best.empty || local.value > best.value || (local.value == best.value && local.index < best.index)))
        best = local;
    }
  }
  if (err) std::rethrow_exception(err);
  return best;
}

template <class F>
void parallel_for(std::size_t n, F&& f) {
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(dms_err)
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace dms
