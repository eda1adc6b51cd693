#pragma once

#include <span>
#include <vector>

#include "motion/skeleton.hpp"
#include "motion/tensor.hpp"

namespace motion::data {

/// One training/evaluation example: H past frames followed by T future
/// frames, contiguous in the source sequence.
struct SampleWindow {
  int source_id = 0;
  int start = 0;
  Tensor past;    // H x 3J
  Tensor future;  // T x 3J

  const double* last_pose() const {
    return past.data() + static_cast<std::size_t>(past.rows() - 1) * past.cols();
  }
};

/// All maximal H+T windows at the given stride; empty when the sequence is
/// too short.
std::vector<SampleWindow> window(const MotionSequence& seq, int H, int T,
                                 int stride, int source_id = 0);

std::vector<SampleWindow> make_windows(std::span<const MotionSequence> seqs,
                                       int H, int T, int stride);

/// For each anchor window, the indices of every window whose last observed
/// pose lies within `threshold` (Euclidean distance over the flattened pose)
/// of the anchor's. The anchor itself always qualifies at distance zero.
struct PseudoGtSet {
  double threshold = 0.0;
  std::vector<std::vector<int>> alternatives;
};

PseudoGtSet mine_pseudo_gt(const std::vector<SampleWindow>& windows,
                           double threshold);

}  // namespace motion::data
