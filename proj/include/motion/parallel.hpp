#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace motion::par {

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

// Static-schedule parallel loop. Every iteration writes only state owned by
// its own index, so results do not depend on the thread count.
template <class F>
void for_each_index(int n, F&& f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < n; ++i) f(i);
}

}  // namespace motion::par
