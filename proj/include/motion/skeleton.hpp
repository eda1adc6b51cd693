#pragma once

#include <string>
#include <vector>

#include "motion/tensor.hpp"

namespace motion::data {

/// Kinematic tree. After construction joint 0 is the root and every other
/// joint's parent has a smaller index.
struct Skeleton {
  std::vector<std::string> joint_names;
  std::vector<int> parents;  // -1 for the root

  int joints() const { return static_cast<int>(parents.size()); }
  int coords() const { return 3 * joints(); }
  /// One limb per non-root joint, in joint order.
  int limbs() const { return joints() - 1; }
  /// Non-root joint index of limb l (l in [0, limbs())).
  int limb_joint(int l) const { return l + 1; }

  int joint_index(const std::string& name) const;  // -1 when absent
  std::string fingerprint() const;

  /// Checks the tree invariants: exactly one root, connected, acyclic,
  /// parents[i] < i. Throws DataError on violation.
  void validate() const;
};

/// Root-centered joint coordinates, one frame per row (F x 3J), in meters.
struct MotionSequence {
  Tensor frames;
  double fps = 0.0;

  int frame_count() const { return frames.rows(); }
};

/// Subtract the root joint position from every joint, per frame. Idempotent.
Tensor root_center(const Tensor& frames, const Skeleton& skeleton);

/// Length of each child->parent segment for one pose row (1 x 3J -> 1 x L).
Tensor limb_lengths(const Tensor& pose, const Skeleton& skeleton);
/// Per-frame limb lengths (F x 3J -> F x L).
Tensor limb_lengths_frames(const Tensor& frames, const Skeleton& skeleton);

struct MotionFile {
  Skeleton skeleton;
  MotionSequence sequence;
};

// Text format, one sequence per file:
//   MOTION v1 joints=<J> fps=<fps> unit=<m|mm>
//   <joint names, space separated>
//   <parent indices, -1 for the root>
//   <3J floats per frame line, x y z per joint>
// Loading converts to meters, reindexes joints topologically when needed and
// root-centers the coordinates. The writer emits 9 significant digits.
MotionFile load_motion_file(const std::string& path);
void save_motion_file(const std::string& path, const Skeleton& skeleton,
                      const MotionSequence& sequence);

}  // namespace motion::data
