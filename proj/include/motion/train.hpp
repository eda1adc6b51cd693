#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "motion/angles.hpp"
#include "motion/flow.hpp"
#include "motion/gcn.hpp"
#include "motion/losses.hpp"
#include "motion/sampler.hpp"
#include "motion/windows.hpp"

namespace motion::train {

/// One run configuration drives data synthesis, prior training, mining and
/// generator training. Named presets: "desk-synth" (minutes on one CPU),
/// "h36m-paper" and "humaneva-paper" (the full published schedules).
struct TrainConfig {
  std::string preset_name = "desk-synth";
  std::string partition = "lower-upper";

  // generator training
  int K = 4;
  double lambda_nf = 0.01;
  double lambda_a = 100.0;
  std::vector<double> lambda_d = {4.0, 12.0};  // per part
  double lambda_r = 2.0;
  double lambda_mm = 1.0;
  double lambda_past = 100.0;
  double lambda_limb = 500.0;
  std::vector<double> alpha = {30.0, 90.0};  // per part
  int batch_size = 8;
  int epochs = 25;
  int samples_per_epoch = 200;
  double base_lr = 1e-3;
  std::uint64_t seed = 1;
  int H = 10;
  int T = 30;
  int M = 10;
  double pseudo_gt_threshold = 0.5;
  int window_stride = 0;  // 0: T/2
  int hidden = 48;
  int latent = 16;
  int max_pseudo_gt = 12;
  int checkpoint_every = 0;  // 0: only the final checkpoint
  int val_windows = 8;
  int val_samples = 10;

  // pose prior training
  int prior_epochs = 30;
  int prior_batch = 256;
  double prior_lr = 1e-3;

  // synthetic data
  int synth_train = 200;
  int synth_val = 20;
  int synth_test = 20;
  int synth_length = 130;
  double synth_fps = 50.0;

  // evaluation protocol
  int eval_samples = 50;

  int stride() const { return window_stride > 0 ? window_stride : std::max(1, T / 2); }
  void validate() const;

  static TrainConfig preset(const std::string& name);
  /// Parses a JSON config: optional "preset" selects the base, any other
  /// field overrides it.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_json_file(const std::string& path);
  nlohmann::json to_json() const;
};

struct LossBreakdown {
  double nf = 0.0;
  double a = 0.0;
  std::vector<double> d;  // per part
  double r = 0.0;
  double mm = 0.0;
  double past = 0.0;
  double limb = 0.0;
  double total = 0.0;
};

struct EpochLog {
  int epoch = 0;
  LossBreakdown mean;
  double lr_scale = 1.0;
  double val_apd = 0.0;
  double val_ade = 0.0;
};

struct WindowExample {
  const data::SampleWindow* window = nullptr;
  std::vector<const Tensor*> pseudo;  // capped, closest-first
};

/// Full per-window training objective on one tape: the weighted sum of all
/// loss terms over the K^N sampling tree. Per-term (unweighted) values are
/// reported through `breakdown`; zero-weight terms are skipped and logged
/// as zero. A term that produces a non-finite value aborts with a
/// TrainingError naming it.
diff::Var window_total_loss(diff::Tape& t, gen::GeneratorStack& stack,
                            const gen::PastContext& ctx,
                            const WindowExample& example,
                            const TrainConfig& cfg,
                            const flow::FrozenFlow& prior,
                            const kin::AngleTable& angles,
                            std::uint64_t z_seed, LossBreakdown* breakdown);

struct TrainResult {
  gen::GeneratorStack model;
  std::vector<EpochLog> log;
  std::string final_checkpoint;  // empty when no out_dir was given
};

/// Trains the part-sequential generator against a frozen prior and angle
/// table. Deterministic per config and seed. Throws TrainingError on
/// divergence (any window loss above 1e6), keeping the last written
/// checkpoint in place.
TrainResult train_generator(const TrainConfig& cfg,
                            std::span<const data::MotionSequence> train_seqs,
                            std::span<const data::MotionSequence> val_seqs,
                            const data::Skeleton& skeleton,
                            const flow::FrozenFlow& prior,
                            const kin::AngleTable& angles,
                            const std::string& out_dir);

std::string metrics_csv(std::span<const EpochLog> log);

}  // namespace motion::train
