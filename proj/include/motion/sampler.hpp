#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "motion/gcn.hpp"

namespace motion::gen {

/// Everything derived from one past window that the generators condition on.
struct PastContext {
  Tensor padded;        // (H+T) x D replicate-padded frames
  Tensor coeffs_coord;  // D x M past coefficients, coordinate order
  std::vector<Tensor> cond;       // per part: conditioning node rows
  std::vector<Tensor> part_past;  // per part: that part's own past rows
};

PastContext make_past_context(const GeneratorStack& stack, const Tensor& past);

/// Standard-normal latent draw for tree node (level, index); independent of
/// evaluation order, so parallel sampling schedules cannot change results.
Tensor draw_latent(int latent, std::uint64_t seed, std::uint64_t level,
                   std::uint64_t index);

/// K-ary sampling tree of depth N on one tape (shared by training and
/// sampling). part_coeffs[i][s] are final coefficients (residual plus past);
/// full_frames[s] is the decoded (H+T) x D sequence of leaf s.
struct TreeVars {
  int K = 0;
  std::vector<std::vector<diff::Var>> part_coeffs;
  std::vector<std::vector<Tensor>> latents;
  std::vector<diff::Var> full_frames;
};

TreeVars build_tree(diff::Tape& t, GeneratorStack& stack,
                    const PastContext& ctx, int K, std::uint64_t seed);

/// Ancestor of leaf `leaf` at level `level` in a K-ary tree of depth N.
int tree_ancestor(int leaf, int level, int K, int N);

// ---- inference-facing sampling -------------------------------------------

struct PartSample {
  int parent = -1;  // index into the previous level, -1 at the root level
  Tensor z;
  Tensor coeffs;  // part coefficients, final
};

/// Full K^N tree with every node's latent code and parent linkage.
struct PredictionSet {
  int K = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<PartSample>> levels;
  std::vector<Tensor> futures;  // per leaf: T x D future frames
};

PredictionSet sample_tree(GeneratorStack& stack, const Tensor& past, int K,
                          std::uint64_t seed);

/// K futures that share bit-identical motion for the first frozen_z.size()
/// parts (one frozen latent per controlled part) while the remaining parts
/// are sampled freshly per future. frozen_z may be empty, which reduces to
/// unconstrained path sampling.
std::vector<Tensor> controllable_sample(GeneratorStack& stack,
                                        const Tensor& past,
                                        std::span<const Tensor> frozen_z,
                                        int K, std::uint64_t seed);

/// S independent root-to-leaf futures (the evaluation protocol).
std::vector<Tensor> sample_paths(GeneratorStack& stack, const Tensor& past,
                                 int S, std::uint64_t seed);

}  // namespace motion::gen
