#pragma once

#include <cstddef>

// Dense fp64 kernels. The functions in kernels:: parallelize over output
// rows with OpenMP once the problem is large enough; kernels::serial::
// holds the plain-loop reference implementations used by the tests and the
// benchmark. A given output element is always computed by exactly one
// thread with a fixed inner-loop order, so the parallel kernels are
// bit-identical to the serial ones for any thread count.

namespace motion::kernels {

namespace serial {

// C(m x n) = A(m x k) * B(k x n)
void matmul_nn(int m, int k, int n, const double* a, const double* b, double* c);
// C(m x n) = A(m x k) * B(n x k)^T
void matmul_nt(int m, int k, int n, const double* a, const double* b, double* c);
// C(m x n) = A(k x m)^T * B(k x n)
void matmul_tn(int m, int k, int n, const double* a, const double* b, double* c);

}  // namespace serial

void matmul_nn(int m, int k, int n, const double* a, const double* b, double* c);
void matmul_nt(int m, int k, int n, const double* a, const double* b, double* c);
void matmul_tn(int m, int k, int n, const double* a, const double* b, double* c);

// Euclidean distance between two flat vectors.
double l2_distance(const double* a, const double* b, std::size_t n);
// L1 distance between two flat vectors.
double l1_distance(const double* a, const double* b, std::size_t n);

}  // namespace motion::kernels
