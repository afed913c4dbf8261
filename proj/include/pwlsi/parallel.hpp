#pragma once

#include <omp.h>

namespace pwlsi {

/// Serial is the reference path; Parallel must produce identical results.
enum class Execution { Serial, Parallel };

/// Calls f(i) for i in [0, count). The callable must not throw.
template <class F>
void for_each_index(int count, Execution ex, F&& f) {
  if (ex == Execution::Serial) {
    for (int i = 0; i < count; ++i) f(i);
    return;
  }
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < count; ++i) f(i);
}

inline int worker_count() { return omp_get_max_threads(); }

}  // namespace pwlsi
