#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "motion/angles.hpp"
#include "motion/errors.hpp"
#include "motion/flow.hpp"
#include "motion/synth.hpp"
#include "test_util.hpp"

using motion::Tensor;
namespace kin = motion::kin;
namespace data = motion::data;
namespace diff = motion::diff;

namespace {

data::Skeleton fork_skeleton() {
  data::Skeleton s;
  s.joint_names = {"root", "a", "b", "c"};
  s.parents = {-1, 0, 0, 0};
  return s;
}

// Pose with limbs root->a along x and root->b at `theta` from x in the xy
// plane; c sits out of plane for plane specs.
Tensor fork_pose(double theta) {
  Tensor pose(1, 12);
  pose(0, 3) = 1.0;  // a = (1,0,0)
  pose(0, 6) = std::cos(theta);
  pose(0, 7) = std::sin(theta);
  pose(0, 11) = 1.0;  // c = (0,0,1)
  return pose;
}

kin::AngleSpec limb_angle_spec(double lower, double upper) {
  kin::AngleSpec spec;
  spec.name = "AB";
  spec.a = {kin::VecSpec::Kind::kLimb, 0, 1, 0};
  spec.b = {kin::VecSpec::Kind::kLimb, 0, 2, 0};
  spec.lower = lower;
  spec.upper = upper;
  spec.mined = true;
  return spec;
}

}  // namespace

TEST_CASE("compute_angle basics") {
  kin::AngleSpec spec = limb_angle_spec(0, std::numbers::pi);
  CHECK(kin::compute_angle(fork_pose(0.0), spec) == 0.0);  // identical vectors
  CHECK(kin::compute_angle(fork_pose(std::numbers::pi / 2), spec) ==
        doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));
  CHECK(kin::compute_angle(fork_pose(1.234), spec) ==
        doctest::Approx(1.234).epsilon(1e-12));
}

TEST_CASE("plane angles match a hand cross/dot evaluation") {
  data::Skeleton skel = fork_skeleton();
  (void)skel;
  // Plane through root, a, b vs limb root->c: normal x(cross)y = z, so the
  // angle against c = z is 0; against a it is pi/2.
  kin::AngleSpec spec;
  spec.name = "PlaneVsLimb";
  spec.a = {kin::VecSpec::Kind::kPlane, 0, 1, 2};
  spec.b = {kin::VecSpec::Kind::kLimb, 0, 3, 0};
  spec.mined = true;
  spec.lower = 0;
  spec.upper = std::numbers::pi;
  Tensor pose = fork_pose(std::numbers::pi / 2);  // a = x, b = y, c = z
  CHECK(kin::compute_angle(pose, spec) == doctest::Approx(0.0));

  kin::AngleSpec vs_a = spec;
  vs_a.b = {kin::VecSpec::Kind::kLimb, 0, 1, 0};
  CHECK(kin::compute_angle(pose, vs_a) ==
        doctest::Approx(std::numbers::pi / 2).epsilon(1e-12));

  // Collinear joints make the plane degenerate.
  Tensor flat = fork_pose(0.0);  // a and b both along x
  CHECK_THROWS_AS(kin::compute_angle(flat, spec), motion::DataError);
}

TEST_CASE("mine_ranges") {
  data::Skeleton skel = fork_skeleton();
  // Constant angle of 1 radian: bounds collapse to [1, 1].
  Tensor frames(3, 12);
  for (int f = 0; f < 3; ++f) {
    Tensor pose = fork_pose(1.0);
    for (int c = 0; c < 12; ++c) frames(f, c) = pose(0, c);
  }
  kin::AngleTable table =
      kin::mine_ranges(frames, skel, {limb_angle_spec(0, 0)});
  CHECK(table.specs[0].lower == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(table.specs[0].upper == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(table.specs[0].mined);

  // Random frames: bounds equal a brute-force scan.
  std::mt19937_64 rng(41);
  Tensor rnd(100, 12);
  for (int f = 0; f < 100; ++f) {
    Tensor pose = fork_pose(0.2 + 2.5 * (static_cast<double>(rng() % 1000) / 1000.0));
    for (int c = 0; c < 12; ++c) rnd(f, c) = pose(0, c);
  }
  kin::AngleTable t2 = kin::mine_ranges(rnd, skel, {limb_angle_spec(0, 0)});
  double lo = 10, hi = -10;
  for (int f = 0; f < 100; ++f) {
    const double a =
        kin::compute_angle(motion::take_rows(rnd, f, f + 1), t2.specs[0]);
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  CHECK(t2.specs[0].lower == lo);
  CHECK(t2.specs[0].upper == hi);

  // Degenerate frames are skipped and counted.
  Tensor with_bad = rnd;
  for (int c = 0; c < 12; ++c) with_bad(7, c) = 0.0;  // all joints coincide
  std::vector<int> skipped;
  kin::AngleTable t3 =
      kin::mine_ranges(with_bad, skel, {limb_angle_spec(0, 0)}, &skipped);
  CHECK(skipped[0] == 1);
  CHECK(t3.specs[0].mined);

  // A spec degenerate everywhere raises.
  Tensor all_bad(2, 12);
  CHECK_THROWS_AS(kin::mine_ranges(all_bad, skel, {limb_angle_spec(0, 0)}),
                  motion::DataError);
}

TEST_CASE("angle_loss values") {
  kin::AngleTable table;
  table.specs = {limb_angle_spec(0.8, 1.6)};

  CHECK(kin::angle_loss(fork_pose(1.2), table) == 0.0);  // inside
  // 0.1 rad below the lower bound costs 0.01.
  CHECK(kin::angle_loss(fork_pose(0.7), table) ==
        doctest::Approx(0.01).epsilon(1e-9));
  CHECK(kin::angle_loss(fork_pose(1.9), table) ==
        doctest::Approx(0.09).epsilon(1e-9));

  // Continuity at the bounds: value and slope vanish at the crossing.
  CHECK(kin::angle_loss(fork_pose(0.8), table) == 0.0);
  CHECK(kin::angle_loss(fork_pose(0.8 - 1e-7), table) < 1e-13);
  CHECK(kin::angle_loss(fork_pose(1.6 + 1e-7), table) < 1e-13);
}

TEST_CASE("every mined frame has zero loss under its own table") {
  data::SynthSkeleton spec = data::desk_skeleton();
  auto seqs = data::synth_generate(55, 3, 50, spec);
  Tensor frames(3 * 50, spec.skeleton.coords());
  int r = 0;
  for (const auto& seq : seqs)
    for (int f = 0; f < seq.frame_count(); ++f, ++r)
      for (int c = 0; c < seq.frames.cols(); ++c)
        frames(r, c) = seq.frames(f, c);

  auto specs = kin::default_angle_specs(spec.skeleton);
  CHECK(specs.size() == 9);  // Arm2ShoulderPlane needs an elbow: omitted
  kin::AngleTable table = kin::mine_ranges(frames, spec.skeleton, specs);
  for (int f = 0; f < frames.rows(); ++f)
    CHECK(kin::angle_loss(motion::take_rows(frames, f, f + 1), table) == 0.0);
}

TEST_CASE("angle loss is invariant to proper global rotations") {
  data::SynthSkeleton sk = data::desk_skeleton();
  auto seqs = data::synth_generate(56, 1, 30, sk);
  auto specs = kin::default_angle_specs(sk.skeleton);
  kin::AngleTable table = kin::mine_ranges(seqs[0].frames, sk.skeleton, specs);

  std::mt19937_64 rng(57);
  Tensor pose = motion::take_rows(seqs[0].frames, 4, 5);
  // Perturb so some angles violate the (tight) mined bounds.
  Tensor bent = pose;
  for (int c = 3; c < bent.cols(); ++c)
    bent(0, c) += 0.12 * testutil::random_tensor(rng, 1, 1)(0, 0);
  const double base = kin::angle_loss(bent, table);
  CHECK(base > 0.0);

  for (int iter = 0; iter < 20; ++iter) {
    // Product of two reflections: a proper rotation.
    Tensor vecs = testutil::random_tensor(rng, 3, 3);
    vecs(2, 0) = vecs(2, 1) = vecs(2, 2) = 0.0;
    Tensor rot = motion::flow::householder_orthogonal(vecs);
    Tensor rotated(1, bent.cols());
    for (int j = 0; j < sk.skeleton.joints(); ++j)
      for (int a = 0; a < 3; ++a) {
        double acc = 0.0;
        for (int b = 0; b < 3; ++b) acc += rot(a, b) * bent(0, 3 * j + b);
        rotated(0, 3 * j + a) = acc;
      }
    CHECK(std::fabs(kin::angle_loss(rotated, table) - base) < 1e-9);
  }
}

TEST_CASE("differentiable angle loss agrees with the host path") {
  data::SynthSkeleton sk = data::desk_skeleton();
  auto seqs = data::synth_generate(58, 1, 40, sk);
  auto specs = kin::default_angle_specs(sk.skeleton);
  kin::AngleTable table = kin::mine_ranges(seqs[0].frames, sk.skeleton, specs);

  std::mt19937_64 rng(59);
  Tensor frames = motion::take_rows(seqs[0].frames, 0, 5);
  for (int f = 0; f < frames.rows(); ++f)
    for (int c = 3; c < frames.cols(); ++c)
      frames(f, c) += 0.15 * testutil::random_tensor(rng, 1, 1)(0, 0);

  double host = 0.0;
  for (int f = 0; f < frames.rows(); ++f)
    host += kin::angle_loss(motion::take_rows(frames, f, f + 1), table);
  host /= frames.rows();

  diff::Tape t;
  const double graph =
      kin::angle_loss_mean(t, t.constant(frames), table).scalar();
  CHECK(graph == doctest::Approx(host).epsilon(1e-9));
}

TEST_CASE("angle loss gradient matches finite differences") {
  data::SynthSkeleton sk = data::desk_skeleton();
  auto seqs = data::synth_generate(60, 1, 40, sk);
  auto specs = kin::default_angle_specs(sk.skeleton);
  kin::AngleTable table = kin::mine_ranges(seqs[0].frames, sk.skeleton, specs);

  std::mt19937_64 rng(61);
  Tensor frames = motion::take_rows(seqs[0].frames, 10, 12);
  for (int f = 0; f < frames.rows(); ++f)
    for (int c = 3; c < frames.cols(); ++c)
      frames(f, c) += 0.2 * testutil::random_tensor(rng, 1, 1)(0, 0);

  diff::Parameter pose(frames, "pose");
  diff::Parameter* ps[] = {&pose};
  const double err = diff::grad_check(
      [&](diff::Tape& t) {
        return kin::angle_loss_mean(t, t.leaf(pose), table);
      },
      ps, 1e-6);
  CHECK(err < 1e-4);
}

TEST_CASE("angle table file round trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "motion_test_angles";
  fs::create_directories(dir);
  const std::string path = (dir / "angles.json").string();

  data::SynthSkeleton sk = data::desk_skeleton();
  auto seqs = data::synth_generate(62, 1, 30, sk);
  kin::AngleTable table = kin::mine_ranges(
      seqs[0].frames, sk.skeleton, kin::default_angle_specs(sk.skeleton));
  kin::save_angle_table(path, table, sk.skeleton);
  kin::AngleTable loaded = kin::load_angle_table(path, sk.skeleton);
  REQUIRE(loaded.specs.size() == table.specs.size());
  for (std::size_t i = 0; i < table.specs.size(); ++i) {
    CHECK(std::fabs(loaded.specs[i].lower - table.specs[i].lower) < 1e-12);
    CHECK(std::fabs(loaded.specs[i].upper - table.specs[i].upper) < 1e-12);
    CHECK(loaded.specs[i].name == table.specs[i].name);
  }

  data::Skeleton other = fork_skeleton();
  CHECK_THROWS_AS(kin::load_angle_table(path, other), motion::ConfigError);
}
