#include <doctest.h>

#include <cmath>
#include <random>

#include "motion/dct.hpp"
#include "motion/errors.hpp"
#include "test_util.hpp"

using motion::Tensor;
namespace dct = motion::dct;
namespace diff = motion::diff;

TEST_CASE("basis orthonormality") {
  dct::DctBasis b = dct::build_basis(2, 2, 4);
  Tensor gram = motion::matmul(motion::transpose(b.mat), b.mat);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(std::fabs(gram(i, j) - (i == j ? 1.0 : 0.0)) < 1e-12);

  // Column 0 is the constant vector 1/sqrt(F).
  dct::DctBasis c = dct::build_basis(5, 8, 6);
  for (int t = 0; t < c.frames(); ++t)
    CHECK(c.mat(t, 0) == doctest::Approx(1.0 / std::sqrt(13.0)).epsilon(1e-14));

  dct::DctBasis paper_sized = dct::build_basis(25, 100, 20);
  CHECK(paper_sized.mat.rows() == 125);
  CHECK(paper_sized.mat.cols() == 20);

  CHECK_THROWS_AS(dct::build_basis(2, 2, 5), motion::ConfigError);
  CHECK_THROWS_AS(dct::build_basis(2, 2, 0), motion::ConfigError);
}

TEST_CASE("replicate pad") {
  Tensor past(2, 2, {1, 2, 3, 4});
  Tensor padded = dct::replicate_pad(past, 2, 3);
  CHECK(padded.rows() == 5);
  CHECK(padded(0, 0) == 1.0);
  // Last T+1 frames are identical copies of the final observed frame.
  for (int i = 1; i < 5; ++i) {
    CHECK(padded(i, 0) == 3.0);
    CHECK(padded(i, 1) == 4.0);
  }
  CHECK_THROWS_AS(dct::replicate_pad(past, 3, 2), motion::ContractError);

  Tensor constant(4, 1, 2.5);
  Tensor cp = dct::replicate_pad(constant, 4, 2);
  for (double v : cp.values()) CHECK(v == 2.5);
}

TEST_CASE("encode of a constant trajectory concentrates on coefficient 0") {
  const int frames = 4;
  dct::DctBasis b = dct::build_basis(2, 2, 4);
  const double c = 1.7;
  Tensor traj(1, frames, c);
  Tensor coeffs = dct::encode(traj, b);
  CHECK(coeffs(0, 0) == doctest::Approx(c * std::sqrt(frames)).epsilon(1e-12));
  for (int k = 1; k < 4; ++k)
    CHECK(std::fabs(coeffs(0, k)) < 1e-12);

  Tensor zeros(3, frames, 0.0);
  Tensor zc = dct::encode(zeros, b);
  for (double v : zc.values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(dct::encode(Tensor(1, 5), b), motion::DimensionError);
  CHECK_THROWS_AS(dct::decode(Tensor(1, 5), b), motion::DimensionError);
}

TEST_CASE("full-rank round trip is the identity") {
  std::mt19937_64 rng(5);
  dct::DctBasis b = dct::build_basis(3, 5, 8);
  for (int iter = 0; iter < 50; ++iter) {
    Tensor x = testutil::random_tensor(rng, 2, 8, -10.0, 10.0);
    Tensor rt = dct::decode(dct::encode(x, b), b);
    CHECK(motion::max_abs_diff(rt, x) < 1e-10);
  }
}

TEST_CASE("a basis column reconstructs exactly under truncation") {
  dct::DctBasis full = dct::build_basis(4, 6, 10);
  dct::DctBasis trunc = dct::build_basis(4, 6, 5);
  Tensor traj(1, 10);
  for (int t = 0; t < 10; ++t) traj(0, t) = full.mat(t, 3);
  Tensor rec = dct::decode(dct::encode(traj, trunc), trunc);
  CHECK(motion::max_abs_diff(rec, traj) < 1e-12);
}

TEST_CASE("truncated reconstruction equals explicit projection") {
  // Step function, M = 2: compare against the projection computed from
  // first principles (sum of dot products with each kept basis column).
  const int frames = 8;
  dct::DctBasis b2 = dct::build_basis(4, 4, 2);
  dct::DctBasis bfull = dct::build_basis(4, 4, 8);
  Tensor step(1, frames);
  for (int t = 0; t < frames; ++t) step(0, t) = t < 4 ? 0.0 : 1.0;

  Tensor rec = dct::decode(dct::encode(step, b2), b2);
  std::vector<double> proj(frames, 0.0);
  for (int k = 0; k < 2; ++k) {
    double dot = 0.0;
    for (int t = 0; t < frames; ++t) dot += step(0, t) * bfull.mat(t, k);
    for (int t = 0; t < frames; ++t) proj[t] += dot * bfull.mat(t, k);
  }
  double rec_err = 0.0, proj_err = 0.0;
  for (int t = 0; t < frames; ++t) {
    rec_err += (rec(0, t) - step(0, t)) * (rec(0, t) - step(0, t));
    proj_err += (proj[t] - step(0, t)) * (proj[t] - step(0, t));
    CHECK(rec(0, t) == doctest::Approx(proj[t]).epsilon(1e-12));
  }
  CHECK(rec_err == doctest::Approx(proj_err).epsilon(1e-12));
}

TEST_CASE("truncation error is non-increasing in M") {
  std::mt19937_64 rng(6);
  const int frames = 12;
  for (int iter = 0; iter < 10; ++iter) {
    Tensor x = testutil::random_tensor(rng, 3, frames, -10.0, 10.0);
    double prev = std::numeric_limits<double>::infinity();
    for (int m = 1; m <= frames; ++m) {
      dct::DctBasis b = dct::build_basis(6, 6, m);
      Tensor rec = dct::decode(dct::encode(x, b), b);
      double err = motion::frobenius_norm(rec - x);
      CHECK(err <= prev + 1e-9);
      prev = err;
    }
  }
}

TEST_CASE("encode and decode are linear maps") {
  std::mt19937_64 rng(7);
  dct::DctBasis b = dct::build_basis(3, 4, 5);
  for (int iter = 0; iter < 10; ++iter) {
    Tensor x = testutil::random_tensor(rng, 2, 7);
    Tensor y = testutil::random_tensor(rng, 2, 7);
    const double a = 1.3, c = -0.6;
    Tensor lhs = dct::encode(x * a + y * c, b);
    Tensor rhs = dct::encode(x, b) * a + dct::encode(y, b) * c;
    CHECK(motion::max_abs_diff(lhs, rhs) < 1e-10);
  }
}

TEST_CASE("gradients flow through the codec") {
  std::mt19937_64 rng(8);
  dct::DctBasis b = dct::build_basis(3, 3, 4);
  diff::Parameter traj(testutil::random_tensor(rng, 2, 6), "traj");
  diff::Parameter coeffs(testutil::random_tensor(rng, 2, 4), "coeffs");
  diff::Parameter* ps[] = {&traj, &coeffs};
  const double err = diff::grad_check(
      [&](diff::Tape& t) {
        diff::Var enc = dct::encode(t, t.leaf(traj), b);
        diff::Var dec = dct::decode(t, diff::add(enc, t.leaf(coeffs)), b);
        return diff::sum(diff::square(dec));
      },
      ps, 1e-5);
  CHECK(err < 1e-6);  // linear maps are exact under central differences
}
