#include "motion/sampler.hpp"

#include <random>

#include "motion/errors.hpp"
#include "motion/parallel.hpp"
#include "motion/rng.hpp"

namespace motion::gen {

PastContext make_past_context(const GeneratorStack& stack, const Tensor& past) {
  PastContext ctx;
  ctx.padded = dct::replicate_pad(past, stack.basis.H, stack.basis.T);
  ctx.coeffs_coord = dct::encode(transpose(ctx.padded), stack.basis);
  const int n = stack.partition.count();
  ctx.cond.reserve(n);
  ctx.part_past.reserve(n);
  for (int i = 0; i < n; ++i) {
    ctx.cond.push_back(stack.gather_node_rows(ctx.coeffs_coord, i));
    const int part_nodes = stack.partition.part_coords(i);
    ctx.part_past.push_back(
        take_rows(ctx.cond.back(), ctx.cond.back().rows() - part_nodes,
                  ctx.cond.back().rows()));
  }
  return ctx;
}

Tensor draw_latent(int latent, std::uint64_t seed, std::uint64_t level,
                   std::uint64_t index) {
  std::mt19937_64 eng =
      rng::engine(rng::derive(seed, 0x7a647261u, level, index));
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor z(1, latent);
  for (double& v : z.values()) v = normal(eng);
  return z;
}

int tree_ancestor(int leaf, int level, int K, int N) {
  int idx = leaf;
  for (int l = N - 1; l > level; --l) idx /= K;
  return idx;
}

TreeVars build_tree(diff::Tape& t, GeneratorStack& stack,
                    const PastContext& ctx, int K, std::uint64_t seed) {
  if (K < 1) throw ContractError("build_tree: K must be >= 1");
  const int N = stack.partition.count();
  TreeVars tree;
  tree.K = K;
  tree.part_coeffs.resize(N);
  tree.latents.resize(N);

  int level_count = 1;
  for (int i = 0; i < N; ++i) {
    level_count *= K;
    diff::Var cond = t.constant(ctx.cond[i]);
    diff::Var part_past = t.constant(ctx.part_past[i]);
    diff::Var zero_rows =
        t.constant(Tensor(stack.partition.part_coords(i), stack.basis.M));
    tree.part_coeffs[i].reserve(level_count);
    tree.latents[i].reserve(level_count);
    for (int s = 0; s < level_count; ++s) {
      // Conditioning: predicted coefficients of this sample's ancestors.
      diff::Var prev;
      if (i == 0) {
        prev = zero_rows;
      } else {
        std::vector<diff::Var> rows_list;
        rows_list.reserve(i + 1);
        int idx = s;
        std::vector<int> ancestors(i);
        for (int l = i - 1; l >= 0; --l) {
          idx /= K;
          ancestors[l] = idx;
        }
        for (int l = 0; l < i; ++l)
          rows_list.push_back(tree.part_coeffs[l][ancestors[l]]);
        rows_list.push_back(zero_rows);
        prev = diff::concat_rows(rows_list);
      }
      Tensor z = draw_latent(stack.latent, seed, i, s);
      diff::Var res = part_residual(t, stack.parts[i], cond, prev, z);
      tree.part_coeffs[i].push_back(diff::mul(
          diff::add(res, part_past), t.constant(stack.root_pin[i])));
      tree.latents[i].push_back(std::move(z));
    }
  }

  const int leaves = level_count;
  tree.full_frames.reserve(leaves);
  diff::Var perm = t.constant(stack.node_to_coord);
  for (int s = 0; s < leaves; ++s) {
    std::vector<diff::Var> rows_list;
    rows_list.reserve(N);
    for (int l = 0; l < N; ++l)
      rows_list.push_back(tree.part_coeffs[l][tree_ancestor(s, l, K, N)]);
    diff::Var coeffs_coord = diff::matmul(perm, diff::concat_rows(rows_list));
    tree.full_frames.push_back(
        diff::transpose(dct::decode(t, coeffs_coord, stack.basis)));
  }
  return tree;
}

PredictionSet sample_tree(GeneratorStack& stack, const Tensor& past, int K,
                          std::uint64_t seed) {
  PastContext ctx = make_past_context(stack, past);
  diff::Tape t;
  TreeVars tree = build_tree(t, stack, ctx, K, seed);
  const int N = stack.partition.count();

  PredictionSet set;
  set.K = K;
  set.seed = seed;
  set.levels.resize(N);
  for (int i = 0; i < N; ++i) {
    const int count = static_cast<int>(tree.part_coeffs[i].size());
    set.levels[i].resize(count);
    for (int s = 0; s < count; ++s) {
      set.levels[i][s].parent = i == 0 ? -1 : s / K;
      set.levels[i][s].z = tree.latents[i][s];
      set.levels[i][s].coeffs = tree.part_coeffs[i][s].value();
    }
  }
  set.futures.reserve(tree.full_frames.size());
  for (const diff::Var& frames : tree.full_frames)
    set.futures.push_back(take_rows(frames.value(), stack.basis.H,
                                    stack.basis.H + stack.basis.T));
  return set;
}

namespace {

Tensor decode_path(GeneratorStack& stack, std::span<const Tensor> part_coeffs) {
  diff::Tape t;
  std::vector<diff::Var> rows_list;
  rows_list.reserve(part_coeffs.size());
  for (const Tensor& c : part_coeffs) rows_list.push_back(t.constant(c));
  diff::Var coeffs_coord = diff::matmul(t.constant(stack.node_to_coord),
                                        diff::concat_rows(rows_list));
  diff::Var frames = diff::transpose(dct::decode(t, coeffs_coord, stack.basis));
  return take_rows(frames.value(), stack.basis.H,
                   stack.basis.H + stack.basis.T);
}

Tensor forward_part(GeneratorStack& stack, const PastContext& ctx, int part,
                    std::span<const Tensor> prev_parts, const Tensor& z) {
  diff::Tape t;
  std::vector<diff::Var> prev_rows;
  prev_rows.reserve(part + 1);
  for (const Tensor& c : prev_parts) prev_rows.push_back(t.constant(c));
  prev_rows.push_back(
      t.constant(Tensor(stack.partition.part_coords(part), stack.basis.M)));
  diff::Var prev = part == 0 ? prev_rows.back() : diff::concat_rows(prev_rows);
  diff::Var res = part_residual(t, stack.parts[part], t.constant(ctx.cond[part]),
                                prev, z);
  return diff::mul(diff::add(res, t.constant(ctx.part_past[part])),
                   t.constant(stack.root_pin[part]))
      .value();
}

}  // namespace

std::vector<Tensor> controllable_sample(GeneratorStack& stack,
                                        const Tensor& past,
                                        std::span<const Tensor> frozen_z,
                                        int K, std::uint64_t seed) {
  const int N = stack.partition.count();
  const int frozen = static_cast<int>(frozen_z.size());
  if (frozen >= N)
    throw ContractError("controllable_sample: at most N-1 parts can be frozen");
  if (K < 1) throw ContractError("controllable_sample: K must be >= 1");

  PastContext ctx = make_past_context(stack, past);

  // Controlled prefix: computed once, shared by every future bit-exactly.
  std::vector<Tensor> prefix;
  prefix.reserve(frozen);
  for (int i = 0; i < frozen; ++i) {
    if (frozen_z[i].rows() != 1 || frozen_z[i].cols() != stack.latent)
      throw DimensionError("controllable_sample: frozen latent " +
                           std::to_string(i) + " must be 1x" +
                           std::to_string(stack.latent));
    prefix.push_back(forward_part(stack, ctx, i, prefix, frozen_z[i]));
  }

  std::vector<Tensor> futures(K);
  par::for_each_index(K, [&](int k) {
    std::vector<Tensor> chain = prefix;
    for (int i = frozen; i < N; ++i) {
      Tensor z = draw_latent(stack.latent, seed, i, k);
      chain.push_back(forward_part(stack, ctx, i, chain, z));
    }
    futures[k] = decode_path(stack, chain);
  });
  return futures;
}

std::vector<Tensor> sample_paths(GeneratorStack& stack, const Tensor& past,
                                 int S, std::uint64_t seed) {
  return controllable_sample(stack, past, {}, S, seed);
}

}  // namespace motion::gen
