#pragma once

#include "motion/tape.hpp"
#include "motion/tensor.hpp"

// Orthonormal DCT-II trajectory codec. A trajectory matrix holds one joint
// coordinate per row and one frame per column; encoding keeps the first M
// coefficients, so decoding a truncated encoding is the least-squares smooth
// reconstruction of the trajectory.

namespace motion::dct {

struct DctBasis {
  Tensor mat;  // (H + T) x M, orthonormal columns
  int H = 0;
  int T = 0;
  int M = 0;

  int frames() const { return H + T; }
};

/// Column k entry at frame t is sqrt(2/F) * cos(pi*(2t+1)*k / (2F)) with
/// F = H + T; column 0 is scaled by 1/sqrt(2). Requires 1 <= M <= F.
DctBasis build_basis(int H, int T, int M);

/// Repeat the last of H frames T more times: (H x D) -> ((H+T) x D),
/// time-major. Throws ContractError when past does not have exactly H rows.
Tensor replicate_pad(const Tensor& past, int H, int T);

/// C = X * basis for trajectories X of shape D x (H+T).
Tensor encode(const Tensor& trajectories, const DctBasis& basis);
/// X = C * basis^T for coefficients C of shape D x M.
Tensor decode(const Tensor& coeffs, const DctBasis& basis);

/// Differentiable variants used inside training graphs.
diff::Var encode(diff::Tape& t, diff::Var trajectories, const DctBasis& basis);
diff::Var decode(diff::Tape& t, diff::Var coeffs, const DctBasis& basis);

}  // namespace motion::dct
