#include "motion/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "motion/errors.hpp"
#include "motion/rng.hpp"

namespace motion::data {

SynthSkeleton desk_skeleton() {
  SynthSkeleton s;
  s.skeleton.joint_names = {"pelvis", "spine", "neck",  "head",
                            "lshoulder", "rshoulder", "lhip",  "lknee",
                            "lankle", "rhip",  "rknee", "rankle"};
  s.skeleton.parents = {-1, 0, 1, 2, 2, 2, 0, 6, 7, 0, 9, 10};
  s.skeleton.validate();
  s.rest_offsets = Tensor(12, 3,
                          {0.0,   0.0,   0.0,     // pelvis
                           0.0,   0.25,  0.0,     // spine
                           0.0,   0.25,  0.0,     // neck
                           0.0,   0.18,  0.0,     // head
                           0.20,  -0.02, 0.0,     // lshoulder
                           -0.20, -0.02, 0.0,     // rshoulder
                           0.11,  -0.02, 0.0,     // lhip
                           0.01,  -0.42, 0.0,     // lknee
                           0.0,   -0.40, 0.02,    // lankle
                           -0.11, -0.02, 0.0,     // rhip
                           -0.01, -0.42, 0.0,     // rknee
                           0.0,   -0.40, 0.02});  // rankle
  return s;
}

namespace {

enum class Area { kTorso, kArm, kLeg };

Area area_of(const std::string& name) {
  if (name.find("shoulder") != std::string::npos) return Area::kArm;
  if (name.find("hip") != std::string::npos ||
      name.find("knee") != std::string::npos ||
      name.find("ankle") != std::string::npos)
    return Area::kLeg;
  return Area::kTorso;
}

bool right_side(const std::string& name) { return name.rfind('r', 0) == 0; }

struct Regime {
  double torso, arm, leg, freq_hz;
};

// Discrete action regimes the per-sequence draws come from.
constexpr Regime kRegimes[] = {
    {0.05, 0.07, 0.05, 0.45},   // sway
    {0.08, 0.16, 0.18, 1.00},   // walk
    {0.10, 0.34, 0.05, 0.70},   // wave
    {0.22, 0.10, 0.12, 0.50},   // bend
};

constexpr double kFreqMultipliers[] = {0.75, 1.0, 1.25};

struct LimbDriver {
  double basis_u[3], basis_w[3], rest[3];
  double length = 0.0;
  double amp_a = 0.0, amp_b = 0.0;
  double omega = 0.0;  // radians per frame
  double phase_a = 0.0, phase_a2 = 0.0, phase_b = 0.0, phase_b2 = 0.0;

  // Channel value: primary sinusoid plus a half-amplitude octave.
  double angle_a(int t) const {
    return amp_a * (std::sin(omega * t + phase_a) +
                    0.5 * std::sin(2.0 * omega * t + phase_a2));
  }
  double angle_b(int t) const {
    return amp_b * (std::sin(omega * t + phase_b) +
                    0.5 * std::sin(2.0 * omega * t + phase_b2));
  }
};

void orthonormal_tangents(const double* d, double* u, double* w) {
  // Pick the world axis least aligned with d, then complete the frame.
  double pick[3] = {1.0, 0.0, 0.0};
  if (std::fabs(d[0]) > 0.9) {
    pick[0] = 0.0;
    pick[1] = 1.0;
  }
  u[0] = d[1] * pick[2] - d[2] * pick[1];
  u[1] = d[2] * pick[0] - d[0] * pick[2];
  u[2] = d[0] * pick[1] - d[1] * pick[0];
  const double un = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
  for (int k = 0; k < 3; ++k) u[k] /= un;
  w[0] = d[1] * u[2] - d[2] * u[1];
  w[1] = d[2] * u[0] - d[0] * u[2];
  w[2] = d[0] * u[1] - d[1] * u[0];
}

}  // namespace

std::vector<MotionSequence> synth_generate(std::uint64_t seed, int n_sequences,
                                           int length,
                                           const SynthSkeleton& spec,
                                           double fps) {
  if (n_sequences < 0) throw ContractError("synth_generate: negative count");
  if (length < 1) throw ContractError("synth_generate: length must be >= 1");
  const Skeleton& skel = spec.skeleton;
  const int J = skel.joints();
  constexpr double two_pi = 2.0 * std::numbers::pi;

  std::vector<MotionSequence> out;
  out.reserve(n_sequences);
  for (int s = 0; s < n_sequences; ++s) {
    std::mt19937_64 eng = rng::engine(rng::derive(seed, s));
    std::uniform_real_distribution<double> phase(0.0, two_pi);
    std::uniform_real_distribution<double> jitter(0.85, 1.15);

    const Regime regime = kRegimes[eng() % std::size(kRegimes)];
    const double freq =
        regime.freq_hz * kFreqMultipliers[eng() % std::size(kFreqMultipliers)];
    const double base_phase = phase(eng);

    std::vector<LimbDriver> drivers(J);
    for (int j = 1; j < J; ++j) {
      LimbDriver& d = drivers[j];
      double dir[3];
      double len = 0.0;
      for (int k = 0; k < 3; ++k) {
        dir[k] = spec.rest_offsets(j, k);
        len += dir[k] * dir[k];
      }
      len = std::sqrt(len);
      if (len <= 1e-8)
        throw DataError("synth_generate: zero-length rest offset for joint " +
                        skel.joint_names[j]);
      for (int k = 0; k < 3; ++k) {
        dir[k] /= len;
        d.rest[k] = dir[k];
      }
      d.length = len;
      orthonormal_tangents(dir, d.basis_u, d.basis_w);

      double amp = regime.torso;
      switch (area_of(skel.joint_names[j])) {
        case Area::kArm: amp = regime.arm; break;
        case Area::kLeg: amp = regime.leg; break;
        case Area::kTorso: break;
      }
      d.amp_a = amp * jitter(eng);
      d.amp_b = 0.5 * amp * jitter(eng);
      d.omega = two_pi * freq / fps;
      // Opposite sides move in anti-phase, like gait.
      const double side = right_side(skel.joint_names[j]) ? std::numbers::pi : 0.0;
      d.phase_a = base_phase + side + 0.3 * phase(eng);
      d.phase_a2 = phase(eng);
      d.phase_b = phase(eng);
      d.phase_b2 = phase(eng);
    }

    MotionSequence seq;
    seq.fps = fps;
    seq.frames = Tensor(length, 3 * J);
    for (int t = 0; t < length; ++t) {
      // Root stays at the origin; children follow their parents.
      for (int j = 1; j < J; ++j) {
        const LimbDriver& d = drivers[j];
        const double a = d.angle_a(t);
        const double b = d.angle_b(t);
        double v[3];
        double norm = 0.0;
        for (int k = 0; k < 3; ++k) {
          v[k] = d.rest[k] + a * d.basis_u[k] + b * d.basis_w[k];
          norm += v[k] * v[k];
        }
        norm = std::sqrt(norm);
        const int p = skel.parents[j];
        for (int k = 0; k < 3; ++k)
          seq.frames(t, 3 * j + k) =
              seq.frames(t, 3 * p + k) + d.length * v[k] / norm;
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace motion::data
