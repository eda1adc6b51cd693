#include "motion/kernels.hpp"

#include <cmath>
#include <cstring>

namespace motion::kernels {

namespace {

// One output row of C = A * B; ikj order vectorizes on the row of B.
inline void row_nn(int row, int k, int n, const double* a, const double* b,
                   double* c) {
  double* cr = c + static_cast<std::size_t>(row) * n;
  std::memset(cr, 0, sizeof(double) * static_cast<std::size_t>(n));
  const double* ar = a + static_cast<std::size_t>(row) * k;
  for (int p = 0; p < k; ++p) {
    const double av = ar[p];
    const double* br = b + static_cast<std::size_t>(p) * n;
    for (int j = 0; j < n; ++j) cr[j] += av * br[j];
  }
}

inline void row_nt(int row, int k, int n, const double* a, const double* b,
                   double* c) {
  double* cr = c + static_cast<std::size_t>(row) * n;
  const double* ar = a + static_cast<std::size_t>(row) * k;
  for (int j = 0; j < n; ++j) {
    const double* br = b + static_cast<std::size_t>(j) * k;
    double acc = 0.0;
    for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
    cr[j] = acc;
  }
}

inline void row_tn(int row, int k, int m, int n, const double* a,
                   const double* b, double* c) {
  double* cr = c + static_cast<std::size_t>(row) * n;
  std::memset(cr, 0, sizeof(double) * static_cast<std::size_t>(n));
  (void)m;
  for (int p = 0; p < k; ++p) {
    const double av = a[static_cast<std::size_t>(p) * m + row];
    const double* br = b + static_cast<std::size_t>(p) * n;
    for (int j = 0; j < n; ++j) cr[j] += av * br[j];
  }
}

constexpr long kParallelFlopThreshold = 1 << 16;

inline bool big_enough(int m, int k, int n) {
  return static_cast<long>(m) * k * n >= kParallelFlopThreshold && m > 1;
}

}  // namespace

namespace serial {

void matmul_nn(int m, int k, int n, const double* a, const double* b,
               double* c) {
  for (int i = 0; i < m; ++i) row_nn(i, k, n, a, b, c);
}

void matmul_nt(int m, int k, int n, const double* a, const double* b,
               double* c) {
  for (int i = 0; i < m; ++i) row_nt(i, k, n, a, b, c);
}

void matmul_tn(int m, int k, int n, const double* a, const double* b,
               double* c) {
  for (int i = 0; i < m; ++i) row_tn(i, k, m, n, a, b, c);
}

}  // namespace serial

void matmul_nn(int m, int k, int n, const double* a, const double* b,
               double* c) {
  if (!big_enough(m, k, n)) {
    serial::matmul_nn(m, k, n, a, b, c);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < m; ++i) row_nn(i, k, n, a, b, c);
}

void matmul_nt(int m, int k, int n, const double* a, const double* b,
               double* c) {
  if (!big_enough(m, k, n)) {
    serial::matmul_nt(m, k, n, a, b, c);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < m; ++i) row_nt(i, k, n, a, b, c);
}

void matmul_tn(int m, int k, int n, const double* a, const double* b,
               double* c) {
  if (!big_enough(m, k, n)) {
    serial::matmul_tn(m, k, n, a, b, c);
    return;
  }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int i = 0; i < m; ++i) row_tn(i, k, m, n, a, b, c);
}

double l2_distance(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double l1_distance(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::fabs(a[i] - b[i]);
  return acc;
}

}  // namespace motion::kernels
