#pragma once

#include <string>
#include <vector>

#include "motion/skeleton.hpp"
#include "motion/tape.hpp"
#include "motion/tensor.hpp"

// Inter-part angles and their data-mined valid ranges. An angle is measured
// between two unit vectors, each either a limb direction or the normal of a
// plane through three joints; poses pay a squared penalty (in radians^2)
// whenever a mined [lower, upper] range is violated.

namespace motion::kin {

struct VecSpec {
  enum class Kind { kLimb, kPlane };
  Kind kind = Kind::kLimb;
  // Limb: direction from joint j0 to joint j1.
  // Plane: unit normal of the plane through (j0, j1, j2), oriented along
  // (j1 - j0) x (j2 - j0).
  int j0 = 0, j1 = 0, j2 = 0;
};

struct AngleSpec {
  std::string name;
  VecSpec a, b;
  double lower = 0.0;  // radians
  double upper = 0.0;
  bool mined = false;
};

struct AngleTable {
  std::vector<AngleSpec> specs;
  std::string skeleton_fingerprint;
};

/// Angle in [0, pi] between the spec's two unit vectors for one pose row.
/// Throws DataError when a limb or plane is degenerate.
double compute_angle(const Tensor& pose, const AngleSpec& spec);

/// Named default angle set, resolved against the skeleton's joint names.
/// Angles whose joints the skeleton lacks are omitted.
std::vector<AngleSpec> default_angle_specs(const data::Skeleton& skeleton);

/// Min/max of every spec's angle over all frames. Degenerate frames are
/// skipped and counted in *skipped (parallel to specs); a spec with no valid
/// frame raises DataError.
AngleTable mine_ranges(const Tensor& frames, const data::Skeleton& skeleton,
                       std::vector<AngleSpec> specs,
                       std::vector<int>* skipped = nullptr);

/// Sum over specs of the squared range violation for one pose, radians^2.
double angle_loss(const Tensor& pose, const AngleTable& table);

/// Differentiable mean over frames of the per-pose angle loss. The cosine is
/// clamped slightly inside [-1, 1], which keeps the gradient finite and can
/// only pull angles away from bounds mined with the exact host path.
diff::Var angle_loss_mean(diff::Tape& t, diff::Var frames,
                          const AngleTable& table);

void save_angle_table(const std::string& path, const AngleTable& table,
                      const data::Skeleton& skeleton);
AngleTable load_angle_table(const std::string& path,
                            const data::Skeleton& skeleton);

}  // namespace motion::kin
