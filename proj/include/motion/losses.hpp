#pragma once

#include <span>

#include "motion/skeleton.hpp"
#include "motion/tape.hpp"

// Training loss terms. Every future is a T x D matrix of predicted frames on
// the tape; ground truths are plain tensors. The min-based terms route their
// gradient only through the argmin sample, ties toward the lowest index.

namespace motion::train {

/// min_j ||future_j - gt||^2 (squared Frobenius).
diff::Var loss_r(diff::Tape& t, std::span<const diff::Var> futures,
                 const Tensor& gt_future);

/// (1/P) sum_p min_j ||future_j - pseudo_p||^2. An empty pseudo list
/// contributes a constant 0 (the caller logs the skip).
diff::Var loss_mm(diff::Tape& t, std::span<const diff::Var> futures,
                  std::span<const Tensor> pseudo_futures);

/// (2/(K(K-1))) sum_{j<k} exp(-||part_j - part_k||_1 / alpha) over one
/// sibling group (samples sharing the same parent-part sample).
diff::Var loss_d_group(diff::Tape& t, std::span<const diff::Var> siblings,
                       double alpha);

/// ||decoded[0:H] - past||^2; decoded holds all H+T reconstructed frames.
diff::Var loss_past(diff::Tape& t, diff::Var decoded_frames,
                    const Tensor& past);

/// sum_t sum_i (length_hat(t,i) - gt_length(i))^2 over future frames.
diff::Var loss_limb(diff::Tape& t, diff::Var future_frames,
                    const Tensor& gt_lengths, const data::Skeleton& skeleton);

}  // namespace motion::train
