#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "motion/errors.hpp"
#include "motion/gcn.hpp"
#include "motion/sampler.hpp"
#include "motion/synth.hpp"
#include "test_util.hpp"
#include "toy_model.hpp"

using motion::Tensor;
namespace gen = motion::gen;
namespace data = motion::data;
namespace diff = motion::diff;

TEST_CASE("gc_layer") {
  std::mt19937_64 rng(71);

  // Zero weights give a zero output regardless of features.
  gen::GcnLayer zero_w(3, 4, 2, "z");
  zero_w.adjacency.value() = testutil::random_tensor(rng, 3, 3);
  {
    diff::Tape t;
    diff::Var out = gen::gc_layer(
        t, t.constant(testutil::random_tensor(rng, 3, 4)), zero_w, true);
    for (double v : out.value().values()) CHECK(v == 0.0);
  }

  // Identity A and W with tiny features: tanh(x) ~ x - x^3/3.
  gen::GcnLayer ident(3, 3, 3, "i");
  ident.adjacency.value() = Tensor::identity(3);
  ident.weights.value() = Tensor::identity(3);
  {
    diff::Tape t;
    Tensor f = testutil::random_tensor(rng, 3, 3, -1e-3, 1e-3);
    diff::Var out = gen::gc_layer(t, t.constant(f), ident, true);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double x = f(i, j);
        CHECK(std::fabs(out.value()(i, j) - (x - x * x * x / 3.0)) < 1e-9);
      }
  }

  // Gradients w.r.t. A, W and F match finite differences.
  gen::GcnLayer layer(3, 4, 2, "g");
  layer.adjacency.value() = testutil::random_tensor(rng, 3, 3);
  layer.weights.value() = testutil::random_tensor(rng, 4, 2);
  diff::Parameter features(testutil::random_tensor(rng, 3, 4), "F");
  diff::Parameter* ps[] = {&layer.adjacency, &layer.weights, &features};
  const double err = diff::grad_check(
      [&](diff::Tape& t) {
        return diff::sum(
            diff::square(gen::gc_layer(t, t.leaf(features), layer, true)));
      },
      ps, 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("partitions") {
  data::SynthSkeleton sk = data::desk_skeleton();

  gen::PartitionSpec lu = gen::PartitionSpec::lower_upper(sk.skeleton);
  CHECK(lu.count() == 2);
  CHECK(lu.names == std::vector<std::string>{"lower", "upper"});
  lu.validate(sk.skeleton);
  CHECK(lu.part_coords(0) == 18);  // hips, knees, ankles
  CHECK(lu.coords_upto(1) == sk.skeleton.coords());

  gen::PartitionSpec five = gen::PartitionSpec::five_part(sk.skeleton);
  CHECK(five.count() == 5);
  five.validate(sk.skeleton);

  gen::PartitionSpec whole = gen::PartitionSpec::whole_body(sk.skeleton);
  CHECK(whole.count() == 1);

  CHECK_THROWS_AS(gen::PartitionSpec::by_name("nope", sk.skeleton),
                  motion::ConfigError);

  // Permutation maps node order back to coordinate order.
  Tensor perm = lu.node_to_coord_permutation(sk.skeleton.coords());
  std::vector<int> order = lu.node_coords(1);
  std::mt19937_64 rng(72);
  Tensor node_rows = testutil::random_tensor(
      rng, sk.skeleton.coords(), 3);
  Tensor coord_rows = motion::matmul(perm, node_rows);
  for (int r = 0; r < node_rows.rows(); ++r)
    for (int c = 0; c < 3; ++c)
      CHECK(coord_rows(order[r], c) == node_rows(r, c));
}

TEST_CASE("zero-initialized generator continues the last pose") {
  toy::Setup s = toy::Setup::make();
  // Reset output layers to the zero initialization.
  for (auto& part : s.stack.parts) part.output.weights.value().fill(0.0);

  gen::PredictionSet set = gen::sample_tree(s.stack, s.win.past, 2, 99);
  REQUIRE(set.futures.size() == 4);

  // Expected: the replicate-padded past pushed through the truncated basis.
  Tensor padded = motion::dct::replicate_pad(s.win.past, s.cfg.H, s.cfg.T);
  Tensor smooth = motion::transpose(motion::dct::decode(
      motion::dct::encode(motion::transpose(padded), s.stack.basis),
      s.stack.basis));
  Tensor expected = motion::take_rows(smooth, s.cfg.H, s.cfg.H + s.cfg.T);
  for (const Tensor& future : set.futures)
    CHECK(motion::max_abs_diff(future, expected) < 1e-12);
}

TEST_CASE("sampling determinism and latent sensitivity") {
  toy::Setup s = toy::Setup::make();

  gen::PredictionSet a = gen::sample_tree(s.stack, s.win.past, 3, 7);
  gen::PredictionSet b = gen::sample_tree(s.stack, s.win.past, 3, 7);
  REQUIRE(a.futures.size() == 9);
  CHECK(a.levels[0].size() == 3);
  for (std::size_t i = 0; i < a.futures.size(); ++i)
    CHECK(a.futures[i].equals(b.futures[i]));

  // Different latents give different outputs once weights are non-zero.
  gen::PredictionSet c = gen::sample_tree(s.stack, s.win.past, 3, 8);
  CHECK(motion::max_abs_diff(a.futures[0], c.futures[0]) > 0.0);

  // Parent linkage: leaf (j,k) shares part-0 coefficients with its parent.
  for (int leaf = 0; leaf < 9; ++leaf) {
    const int parent = a.levels[1][leaf].parent;
    CHECK(parent == leaf / 3);
  }

  // Single-part, single-sample tree reduces to one future.
  gen::GeneratorStack whole = gen::GeneratorStack::init(
      s.skel, gen::PartitionSpec::whole_body(s.skel), s.cfg.H, s.cfg.T,
      s.cfg.M, 6, 3, 1);
  gen::PredictionSet single = gen::sample_tree(whole, s.win.past, 1, 1);
  CHECK(single.futures.size() == 1);
}

TEST_CASE("conditioning is causal: later latents leave earlier parts alone") {
  toy::Setup s = toy::Setup::make();
  gen::PredictionSet set = gen::sample_tree(s.stack, s.win.past, 3, 21);

  // Futures sharing a parent have bit-identical lower-body columns.
  const auto& lower = s.stack.partition.parts[0];
  for (int leaf = 0; leaf < 9; ++leaf) {
    const int sibling = (leaf / 3) * 3;  // first leaf under the same parent
    for (int f = 0; f < s.cfg.T; ++f)
      for (int j : lower)
        for (int k = 0; k < 3; ++k)
          CHECK(set.futures[leaf](f, 3 * j + k) ==
                set.futures[sibling](f, 3 * j + k));
  }
}

TEST_CASE("controllable sampling pins the frozen parts bit-exactly") {
  toy::Setup s = toy::Setup::make();
  Tensor z1 = gen::draw_latent(s.cfg.latent, 1234, 0, 0);

  auto run1 = gen::controllable_sample(s.stack, s.win.past, {{z1}}, 5, 50);
  auto run2 = gen::controllable_sample(s.stack, s.win.past, {{z1}}, 5, 51);
  REQUIRE(run1.size() == 5);

  const auto& lower = s.stack.partition.parts[0];
  const auto& upper = s.stack.partition.parts[1];
  auto lower_equal = [&](const Tensor& a, const Tensor& b) {
    for (int f = 0; f < a.rows(); ++f)
      for (int j : lower)
        for (int k = 0; k < 3; ++k)
          if (a(f, 3 * j + k) != b(f, 3 * j + k)) return false;
    return true;
  };
  // Within a run and across runs with different seeds: same frozen motion.
  for (const auto& fut : run1) CHECK(lower_equal(fut, run1[0]));
  for (const auto& fut : run2) CHECK(lower_equal(fut, run1[0]));

  // Upper body varies across samples.
  double spread = 0.0;
  for (int f = 0; f < run1[0].rows(); ++f)
    for (int j : upper)
      for (int k = 0; k < 3; ++k)
        spread = std::max(spread, std::fabs(run1[0](f, 3 * j + k) -
                                            run1[1](f, 3 * j + k)));
  CHECK(spread > 0.0);

  // Freezing nothing reduces to unconstrained path sampling.
  auto paths = gen::sample_paths(s.stack, s.win.past, 3, 50);
  auto unconstrained =
      gen::controllable_sample(s.stack, s.win.past, {}, 3, 50);
  for (std::size_t i = 0; i < paths.size(); ++i)
    CHECK(paths[i].equals(unconstrained[i]));

  CHECK_THROWS_AS(
      gen::controllable_sample(s.stack, s.win.past, {{z1, z1}}, 3, 50),
      motion::ContractError);
}

TEST_CASE("decoded predictions stay temporally smooth") {
  toy::Setup s = toy::Setup::make();
  gen::PredictionSet set = gen::sample_tree(s.stack, s.win.past, 3, 31);

  double train_max = 0.0;
  Tensor all = toy::frames(40);
  for (int f = 1; f < all.rows(); ++f)
    for (int j = 0; j < s.skel.joints(); ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double d = all(f, 3 * j + k) - all(f - 1, 3 * j + k);
        acc += d * d;
      }
      train_max = std::max(train_max, std::sqrt(acc));
    }

  for (const Tensor& fut : set.futures)
    for (int f = 1; f < fut.rows(); ++f)
      for (int j = 0; j < s.skel.joints(); ++j) {
        double acc = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double d = fut(f, 3 * j + k) - fut(f - 1, 3 * j + k);
          acc += d * d;
        }
        CHECK(std::sqrt(acc) < 10.0 * train_max);
      }
}

TEST_CASE("five-part sequential generation and control") {
  data::SynthSkeleton sk = data::desk_skeleton();
  gen::PartitionSpec five = gen::PartitionSpec::five_part(sk.skeleton);
  gen::GeneratorStack stack =
      gen::GeneratorStack::init(sk.skeleton, five, 6, 10, 4, 8, 4, 3);
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> uni(-0.05, 0.05);
  for (auto& part : stack.parts)
    for (double& v : part.output.weights.value().values()) v = uni(rng);

  auto seqs = data::synth_generate(45, 1, 20, sk);
  Tensor past = motion::take_rows(seqs[0].frames, 0, 6);

  // Depth-5 tree: K^N futures with K samples per level fan-out.
  gen::PredictionSet set = gen::sample_tree(stack, past, 2, 9);
  CHECK(set.futures.size() == 32);
  for (int level = 0; level < 5; ++level)
    CHECK(set.levels[level].size() == static_cast<std::size_t>(1 << (level + 1)));

  // Freezing the first three parts pins them bit-exactly across futures.
  std::vector<Tensor> frozen;
  for (int i = 0; i < 3; ++i)
    frozen.push_back(gen::draw_latent(stack.latent, 46, 0, i));
  auto futures = gen::controllable_sample(stack, past, frozen, 4, 47);
  auto slice = [&](const Tensor& fut, int part) {
    std::vector<double> out;
    for (int f = 0; f < fut.rows(); ++f)
      for (int j : five.parts[part])
        for (int k = 0; k < 3; ++k) out.push_back(fut(f, 3 * j + k));
    return out;
  };
  for (int part = 0; part < 3; ++part)
    for (const Tensor& fut : futures)
      CHECK(slice(fut, part) == slice(futures[0], part));
  bool varied = false;
  for (int part = 3; part < 5 && !varied; ++part)
    varied = slice(futures[0], part) != slice(futures[1], part);
  CHECK(varied);
}

TEST_CASE("generator checkpoint round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "motion_test_gcn";
  fs::create_directories(dir);
  const std::string path = (dir / "gen.json").string();

  toy::Setup s = toy::Setup::make();
  gen::save_generator(path, s.stack);
  gen::GeneratorStack loaded = gen::load_generator(path, s.skel);

  gen::PredictionSet a = gen::sample_tree(s.stack, s.win.past, 2, 5);
  gen::PredictionSet b = gen::sample_tree(loaded, s.win.past, 2, 5);
  for (std::size_t i = 0; i < a.futures.size(); ++i)
    CHECK(a.futures[i].equals(b.futures[i]));

  data::SynthSkeleton other = data::desk_skeleton();
  CHECK_THROWS_AS(gen::load_generator(path, other.skeleton),
                  motion::ConfigError);
}
