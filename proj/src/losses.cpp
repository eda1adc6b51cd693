#include "motion/losses.hpp"

#include <vector>

#include "motion/errors.hpp"
#include "motion/flow.hpp"

namespace motion::train {

namespace {

diff::Var sq_dist(diff::Tape& t, diff::Var a, const Tensor& b) {
  return diff::sum(diff::square(diff::sub(a, t.constant(b))));
}

}  // namespace

diff::Var loss_r(diff::Tape& t, std::span<const diff::Var> futures,
                 const Tensor& gt_future) {
  if (futures.empty()) throw ContractError("loss_r: no predictions");
  std::vector<diff::Var> dists;
  dists.reserve(futures.size());
  for (diff::Var f : futures) dists.push_back(sq_dist(t, f, gt_future));
  return dists[diff::argmin_value(dists)];
}

diff::Var loss_mm(diff::Tape& t, std::span<const diff::Var> futures,
                  std::span<const Tensor> pseudo_futures) {
  if (futures.empty()) throw ContractError("loss_mm: no predictions");
  if (pseudo_futures.empty()) return t.constant_scalar(0.0);
  diff::Var acc;
  bool have = false;
  for (const Tensor& pseudo : pseudo_futures) {
    std::vector<diff::Var> dists;
    dists.reserve(futures.size());
    for (diff::Var f : futures) dists.push_back(sq_dist(t, f, pseudo));
    diff::Var best = dists[diff::argmin_value(dists)];
    acc = have ? diff::add(acc, best) : best;
    have = true;
  }
  return diff::scale(acc, 1.0 / static_cast<double>(pseudo_futures.size()));
}

diff::Var loss_d_group(diff::Tape& t, std::span<const diff::Var> siblings,
                       double alpha) {
  const int k = static_cast<int>(siblings.size());
  if (k < 2) throw ContractError("loss_d: need at least 2 siblings");
  if (alpha <= 0.0) throw ContractError("loss_d: alpha must be positive");
  diff::Var acc;
  bool have = false;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) {
      diff::Var term = diff::exp(diff::scale(
          diff::l1_norm(diff::sub(siblings[i], siblings[j])), -1.0 / alpha));
      acc = have ? diff::add(acc, term) : term;
      have = true;
    }
  (void)t;
  return diff::scale(acc, 2.0 / (static_cast<double>(k) * (k - 1)));
}

diff::Var loss_past(diff::Tape& t, diff::Var decoded_frames,
                    const Tensor& past) {
  const int H = past.rows();
  if (decoded_frames.rows() < H)
    throw DimensionError("loss_past: decoded sequence shorter than the past");
  return sq_dist(t, diff::rows(decoded_frames, 0, H), past);
}

diff::Var loss_limb(diff::Tape& t, diff::Var future_frames,
                    const Tensor& gt_lengths, const data::Skeleton& skeleton) {
  if (gt_lengths.rows() != 1 || gt_lengths.cols() != skeleton.limbs())
    throw DimensionError("loss_limb: expected 1x" +
                         std::to_string(skeleton.limbs()) + " lengths");
  diff::Var diffs = diff::matmul(
      future_frames, t.constant(flow::limb_diff_matrix(skeleton)));
  diff::Var lengths = diff::norm3_rows(diffs, 1e-8);
  Tensor tiled(future_frames.rows(), skeleton.limbs());
  for (int r = 0; r < tiled.rows(); ++r)
    for (int c = 0; c < tiled.cols(); ++c) tiled(r, c) = gt_lengths(0, c);
  return sq_dist(t, lengths, tiled);
}

}  // namespace motion::train
