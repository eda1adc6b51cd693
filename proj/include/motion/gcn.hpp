#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "motion/dct.hpp"
#include "motion/skeleton.hpp"
#include "motion/tape.hpp"

// Part-sequential graph-convolutional generator. The body is split into an
// ordered list of parts; generator i maps the past-motion DCT coefficients
// of parts 0..i, the predicted coefficients of parts 0..i-1 and a latent
// code to residual DCT coefficients for part i. One graph node per joint
// coordinate.

namespace motion::gen {

struct PartitionSpec {
  std::vector<std::string> names;
  std::vector<std::vector<int>> parts;  // ordered joint-index sets

  int count() const { return static_cast<int>(parts.size()); }
  /// Coordinate count of part i.
  int part_coords(int i) const {
    return 3 * static_cast<int>(parts[i].size());
  }
  /// Coordinate count of parts 0..i inclusive.
  int coords_upto(int i) const;
  /// Skeleton coordinate indices of parts 0..i, in node order.
  std::vector<int> node_coords(int upto_part) const;
  /// D x D permutation with coord_rows = P * node_rows.
  Tensor node_to_coord_permutation(int coords) const;

  /// Disjoint, exhaustive, within skeleton bounds.
  void validate(const data::Skeleton& skeleton) const;

  /// Two parts: lower body (hips and legs) first, then the rest.
  static PartitionSpec lower_upper(const data::Skeleton& skeleton);
  /// Five parts: torso, right leg, left leg, right arm, left arm.
  static PartitionSpec five_part(const data::Skeleton& skeleton);
  /// Single part covering the whole body.
  static PartitionSpec whole_body(const data::Skeleton& skeleton);
  static PartitionSpec by_name(const std::string& name,
                               const data::Skeleton& skeleton);
};

struct GcnLayer {
  diff::Parameter adjacency;  // nodes x nodes
  diff::Parameter weights;    // in_features x out_features

  GcnLayer(int nodes, int in_features, int out_features,
           const std::string& name);
};

/// tanh(A * F * W); the final layer of a generator skips the tanh so the
/// coefficient residuals are unbounded.
diff::Var gc_layer(diff::Tape& t, diff::Var features, GcnLayer& layer,
                   bool activate);

inline constexpr int kResidualBlocks = 4;

struct PartGenerator {
  int part_index = 0;
  int nodes = 0;       // coordinates of parts 0..part_index
  int part_nodes = 0;  // coordinates of part part_index
  int in_features = 0; // 2M + latent
  int hidden = 0;
  int latent = 0;
  int M = 0;
  GcnLayer input;
  std::vector<std::array<GcnLayer, 2>> blocks;
  GcnLayer output;

  PartGenerator(int part_index, int nodes, int part_nodes, int M, int hidden,
                int latent);
  std::vector<diff::Parameter*> parameters();
};

/// Residual prediction for part i (part_nodes x M). cond_coeffs holds the
/// replicate-padded-past coefficients of every node; prev_coeffs holds the
/// predicted coefficients for parts < i with zero rows for part-i nodes.
/// The residual is added to the part's past coefficients by the caller.
diff::Var part_residual(diff::Tape& t, PartGenerator& gen, diff::Var cond_coeffs,
                        diff::Var prev_coeffs, const Tensor& z);

struct GeneratorStack {
  data::Skeleton skeleton;
  PartitionSpec partition;
  dct::DctBasis basis;
  int hidden = 0;
  int latent = 0;
  std::vector<PartGenerator> parts;
  Tensor node_to_coord;  // cached permutation
  // Per part: zero rows for root coordinates, ones elsewhere. The input data
  // is root-centered, so pinning the root's predicted coefficients to zero
  // keeps decoded poses exactly root-centered (and loaders' re-centering a
  // bit-exact no-op).
  std::vector<Tensor> root_pin;

  static GeneratorStack init(const data::Skeleton& skeleton,
                             PartitionSpec partition, int H, int T, int M,
                             int hidden, int latent, std::uint64_t seed);
  std::vector<diff::Parameter*> parameters();

  /// Past coefficients in node order for parts 0..i (rows gathered from the
  /// coordinate-order coefficient matrix).
  Tensor gather_node_rows(const Tensor& coord_rows, int upto_part) const;
};

void save_generator(const std::string& path, const GeneratorStack& stack);
GeneratorStack load_generator(const std::string& path,
                              const data::Skeleton& skeleton);

}  // namespace motion::gen
