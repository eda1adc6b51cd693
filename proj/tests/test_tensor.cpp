#include <doctest.h>

#include "motion/errors.hpp"
#include "motion/kernels.hpp"
#include "motion/tensor.hpp"
#include "test_util.hpp"

using motion::Tensor;

TEST_CASE("tensor shape and storage") {
  Tensor t(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  CHECK(t(1, 0) == 4.0);  // row-major
  CHECK(t.shape()[0] * t.shape()[1] == static_cast<int>(t.size()));
  CHECK_THROWS_AS(t.at(2, 0), motion::DimensionError);
  CHECK_THROWS_AS(Tensor(1, 2, {1.0}), motion::DimensionError);
  CHECK_THROWS_AS(t.scalar_value(), motion::ContractError);
  CHECK(Tensor::scalar(7.5).scalar_value() == 7.5);
}

TEST_CASE("host matmul against hand-rolled loops") {
  std::mt19937_64 rng(11);
  for (int iter = 0; iter < 10; ++iter) {
    const int m = 1 + static_cast<int>(rng() % 7);
    const int k = 1 + static_cast<int>(rng() % 7);
    const int n = 1 + static_cast<int>(rng() % 7);
    Tensor a = testutil::random_tensor(rng, m, k);
    Tensor b = testutil::random_tensor(rng, k, n);
    Tensor c = motion::matmul(a, b);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
        CHECK(c(i, j) == doctest::Approx(acc).epsilon(1e-14));
      }
  }
  CHECK_THROWS_AS(motion::matmul(Tensor(2, 3), Tensor(2, 3)),
                  motion::DimensionError);
}

TEST_CASE("parallel kernels bit-identical to serial reference") {
  std::mt19937_64 rng(12);
  // Big enough to cross the parallel threshold.
  Tensor a = testutil::random_tensor(rng, 96, 64);
  Tensor b = testutil::random_tensor(rng, 64, 80);
  Tensor c_par(96, 80), c_ser(96, 80);
  motion::kernels::matmul_nn(96, 64, 80, a.data(), b.data(), c_par.data());
  motion::kernels::serial::matmul_nn(96, 64, 80, a.data(), b.data(),
                                     c_ser.data());
  CHECK(c_par.equals(c_ser));

  Tensor bt = testutil::random_tensor(rng, 80, 64);
  Tensor d_par(96, 80), d_ser(96, 80);
  motion::kernels::matmul_nt(96, 64, 80, a.data(), bt.data(), d_par.data());
  motion::kernels::serial::matmul_nt(96, 64, 80, a.data(), bt.data(),
                                     d_ser.data());
  CHECK(d_par.equals(d_ser));

  Tensor at = testutil::random_tensor(rng, 64, 96);
  Tensor e_par(96, 80), e_ser(96, 80);
  motion::kernels::matmul_tn(96, 64, 80, at.data(), b.data(), e_par.data());
  motion::kernels::serial::matmul_tn(96, 64, 80, at.data(), b.data(),
                                     e_ser.data());
  CHECK(e_par.equals(e_ser));
}

TEST_CASE("transpose and slicing helpers") {
  Tensor t(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor tt = motion::transpose(t);
  CHECK(tt.rows() == 3);
  CHECK(tt(0, 1) == 4.0);
  Tensor r = motion::take_rows(t, 1, 2);
  CHECK(r.rows() == 1);
  CHECK(r(0, 2) == 6.0);
  Tensor c = motion::take_cols(t, 1, 3);
  CHECK(c.cols() == 2);
  CHECK(c(1, 0) == 5.0);
  Tensor v = motion::vstack(r, r);
  CHECK(v.rows() == 2);
  CHECK(v(1, 0) == 4.0);
}
