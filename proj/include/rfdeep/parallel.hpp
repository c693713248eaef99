#pragma once

#include <omp.h>

namespace rfdeep {

/// Caps the OpenMP team size for all kernels; 0 leaves the runtime default.
/// Nested regions run serially so an outer per-seed loop does not multiply
/// threads inside per-tree loops.
inline void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
  omp_set_max_active_levels(1);
}

inline int max_threads() { return omp_get_max_threads(); }

}  // namespace rfdeep
