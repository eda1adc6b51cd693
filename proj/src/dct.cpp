#include "motion/dct.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <string>

#include "motion/errors.hpp"

namespace motion::dct {

DctBasis build_basis(int H, int T, int M) {
  const int frames = H + T;
  if (H < 0 || T < 0 || frames < 1)
    throw ConfigError("dct: invalid window H=" + std::to_string(H) +
                      " T=" + std::to_string(T));
  if (M < 1 || M > frames)
    throw ConfigError("dct: M=" + std::to_string(M) + " outside [1, " +
                      std::to_string(frames) + "]");
  DctBasis basis;
  basis.H = H;
  basis.T = T;
  basis.M = M;
  basis.mat = Tensor(frames, M);
  const double norm = std::sqrt(2.0 / frames);
  for (int k = 0; k < M; ++k) {
    const double col_scale = k == 0 ? norm / std::numbers::sqrt2 : norm;
    for (int t = 0; t < frames; ++t)
      basis.mat(t, k) =
          col_scale *
          std::cos(std::numbers::pi * (2.0 * t + 1.0) * k / (2.0 * frames));
  }
  return basis;
}

Tensor replicate_pad(const Tensor& past, int H, int T) {
  if (past.rows() != H)
    throw ContractError("replicate_pad: expected " + std::to_string(H) +
                        " frames, got " + std::to_string(past.rows()));
  Tensor out(H + T, past.cols());
  std::memcpy(out.data(), past.data(), past.size() * sizeof(double));
  const double* last = past.data() + static_cast<std::size_t>(H - 1) * past.cols();
  for (int i = H; i < H + T; ++i)
    std::memcpy(out.data() + static_cast<std::size_t>(i) * past.cols(), last,
                past.cols() * sizeof(double));
  return out;
}

namespace {

void check_traj(const Tensor& trajectories, const DctBasis& basis) {
  if (trajectories.cols() != basis.frames())
    throw DimensionError("dct encode: " + std::to_string(trajectories.cols()) +
                         " frames, basis has " +
                         std::to_string(basis.frames()));
}

void check_coeffs(const Tensor& coeffs, const DctBasis& basis) {
  if (coeffs.cols() != basis.M)
    throw DimensionError("dct decode: " + std::to_string(coeffs.cols()) +
                         " coefficients, basis has " +
                         std::to_string(basis.M));
}

}  // namespace

Tensor encode(const Tensor& trajectories, const DctBasis& basis) {
  check_traj(trajectories, basis);
  return matmul(trajectories, basis.mat);
}

Tensor decode(const Tensor& coeffs, const DctBasis& basis) {
  check_coeffs(coeffs, basis);
  return matmul(coeffs, transpose(basis.mat));
}

diff::Var encode(diff::Tape& t, diff::Var trajectories, const DctBasis& basis) {
  check_traj(trajectories.value(), basis);
  return diff::matmul(trajectories, t.constant(basis.mat));
}

diff::Var decode(diff::Tape& t, diff::Var coeffs, const DctBasis& basis) {
  check_coeffs(coeffs.value(), basis);
  return diff::matmul(coeffs, t.constant(transpose(basis.mat)));
}

}  // namespace motion::dct
