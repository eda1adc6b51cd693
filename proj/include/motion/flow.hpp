#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motion/skeleton.hpp"
#include "motion/tape.hpp"
#include "motion/tensor.hpp"

// Pose prior: a 3-layer invertible network over limb-direction vectors with
// an exact change-of-variables likelihood. Each layer maps a row vector f to
// prelu(f*Q*R + b) where Q is orthogonal (a product of Householder
// reflections of learnable vectors), R is upper triangular with positive
// diagonal exp(r_diag_raw), and the activation slope is exp(slope_raw), so
// every factor of the Jacobian determinant is available in closed form.

namespace motion::flow {

inline constexpr int kLayers = 3;

struct LayerParams {
  diff::Parameter householder;  // n x n, row i is reflection vector i
  diff::Parameter r_upper;      // n x n, strictly-upper entries used
  diff::Parameter r_diag_raw;   // 1 x n
  diff::Parameter bias;         // 1 x n
  diff::Parameter slope_raw;    // 1 x 1

  explicit LayerParams(int dim, const std::string& name);
};

struct FlowParams {
  int dim = 0;
  std::vector<LayerParams> layers;

  /// Exact identity map: zero reflections, R = I, b = 0, slope = 1.
  static FlowParams identity(int dim);
  /// Training start: random unit reflection vectors, otherwise identity, so
  /// the map is an orthogonal rotation (density-preserving).
  static FlowParams init(int dim, std::uint64_t seed);
  /// Fully random draw (used by the exactness tests).
  static FlowParams random(int dim, std::uint64_t seed);

  std::vector<diff::Parameter*> parameters();
};

/// Product of Householder reflections of the rows of `vectors` (n x n).
/// Rows with squared norm below 1e-24 act as the identity.
Tensor householder_orthogonal(const Tensor& vectors);

/// Immutable snapshot used for evaluation, inversion and generator training.
struct FrozenLayer {
  Tensor q;      // orthogonal
  Tensor r;      // upper triangular, positive diagonal
  Tensor qr;     // q * r
  Tensor bias;   // 1 x n
  double slope = 1.0;
  double log_slope = 0.0;
  double log_det_r = 0.0;  // sum log diag(R)
};

struct FrozenFlow {
  int dim = 0;
  std::vector<FrozenLayer> layers;
};

FrozenFlow freeze(const FlowParams& params);

struct ForwardResult {
  Tensor h;  // same shape as the input rows
  double log_det = 0.0;
};

/// Forward map of one row vector (1 x dim) with its log |det Jacobian|.
ForwardResult forward(const FrozenFlow& flow, const Tensor& d);
/// Exact inverse of forward.
Tensor inverse(const FrozenFlow& flow, const Tensor& h);
/// log N(h | 0, I) + log |det Jacobian| for one row vector.
double log_likelihood(const FrozenFlow& flow, const Tensor& d);

// ---- limb directions ----------------------------------------------------

/// Unit parent->child direction per limb, concatenated in joint order
/// (1 x 3L). Throws DataError naming the joint when a limb is shorter than
/// 1e-8.
Tensor to_limb_directions(const Tensor& pose, const data::Skeleton& skeleton);
/// Per-frame limb directions (F x 3J -> F x 3L).
Tensor limb_direction_rows(const Tensor& frames, const data::Skeleton& skeleton);
/// Constant selector G (3J x 3L) with frames * G = parent->child difference
/// vectors; used to keep the loss differentiable w.r.t. the pose.
Tensor limb_diff_matrix(const data::Skeleton& skeleton);

// ---- differentiable paths ------------------------------------------------

/// Per-row log-likelihood of pre-computed limb-direction rows (B x dim ->
/// B x 1) against a frozen prior; gradients flow to `dirs`.
diff::Var log_likelihood_rows(diff::Tape& t, diff::Var dirs,
                              const FrozenFlow& flow);

/// Mean negative log-likelihood of a batch of direction rows with gradients
/// to the flow parameters (prior training).
diff::Var nll_mean(diff::Tape& t, const Tensor& dirs_batch, FlowParams& params);

/// Mean over frames of -log_likelihood of each frame's limb directions.
/// Limb lengths are clamped at 1e-6 before normalizing so a collapsed limb
/// yields a large but finite, differentiable penalty.
diff::Var nf_loss(diff::Tape& t, diff::Var frames, const data::Skeleton& skeleton,
                  const FrozenFlow& flow);
double nf_loss_value(const Tensor& frames, const data::Skeleton& skeleton,
                     const FrozenFlow& flow);

// ---- training -------------------------------------------------------------

struct PriorTrainConfig {
  int epochs = 40;
  int batch = 256;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  double val_fraction = 0.1;
};

struct PriorEpochStats {
  int epoch = 0;        // 0 is the untrained starting point
  double train_nll = 0.0;
  double val_nll = 0.0;
};

struct PriorTrainResult {
  FlowParams params;
  std::vector<PriorEpochStats> curve;
};

/// Maximum-likelihood training of the prior on direction rows (N x dim).
PriorTrainResult train_prior(const Tensor& dirs, const PriorTrainConfig& cfg);

/// Closed-form standard-normal mean NLL of direction rows (the untrained
/// baseline the prior has to beat).
double gaussian_nll(const Tensor& dirs);

// ---- checkpointing ---------------------------------------------------------

void save_prior(const std::string& path, const FlowParams& params);
/// Loads a prior checkpoint; rejects a dimension mismatch.
FlowParams load_prior(const std::string& path, int expected_dim);

}  // namespace motion::flow
