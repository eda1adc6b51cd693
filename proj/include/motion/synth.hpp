#pragma once

#include <cstdint>
#include <vector>

#include "motion/skeleton.hpp"

namespace motion::data {

/// Skeleton plus rest-pose geometry for the procedural generator.
struct SynthSkeleton {
  Skeleton skeleton;
  Tensor rest_offsets;  // J x 3 child offset from parent; root row is zero
};

/// Built-in 12-joint humanoid used by the desk-scale experiments.
SynthSkeleton desk_skeleton();

/// Procedural multi-modal motion: every limb direction is driven by sums of
/// sinusoids whose amplitudes, frequencies and phases are drawn per sequence
/// from a small set of discrete action regimes. Limb lengths are constant by
/// construction and the root stays at the origin. Deterministic per seed.
std::vector<MotionSequence> synth_generate(std::uint64_t seed, int n_sequences,
                                           int length,
                                           const SynthSkeleton& spec,
                                           double fps = 50.0);

}  // namespace motion::data
