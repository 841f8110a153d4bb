#pragma once

#if defined(_OPENMP)
#include <omp.h>
#else
inline int omp_get_thread_num() { return 0; }
inline int omp_get_max_threads() { return 1; }
inline void omp_set_num_threads(int) {}
#endif

namespace bevrec {

/// Number of worker threads the parallel kernels will use.
inline int worker_count() { return omp_get_max_threads(); }

/// Caps the worker count; values < 1 are ignored.
inline void set_worker_count(int jobs) {
  if (jobs >= 1) omp_set_num_threads(jobs);
}

}  // namespace bevrec
