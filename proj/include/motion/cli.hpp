#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "motion/metrics.hpp"
#include "motion/skeleton.hpp"
#include "motion/train.hpp"

// Command implementations behind the CLI tool. Each run_* writes its
// artifacts plus a manifest, validates everything it wrote by reloading it,
// and throws on any failure, so the binary's exit status reflects output
// integrity.

namespace motion::cli {

struct Dataset {
  data::Skeleton skeleton;
  double fps = 0.0;
  std::vector<data::MotionSequence> train, val, test;

  const std::vector<data::MotionSequence>& split(const std::string& name) const;
};

Dataset load_dataset(const std::string& dir);

struct CommandResult {
  std::vector<std::string> outputs;
};

CommandResult run_synth(const train::TrainConfig& cfg,
                        const std::string& out_dir);
CommandResult run_train_prior(const train::TrainConfig& cfg,
                              const std::string& data_dir,
                              const std::string& out_dir);
CommandResult run_mine_angles(const train::TrainConfig& cfg,
                              const std::string& data_dir,
                              const std::string& out_dir);
CommandResult run_train(const train::TrainConfig& cfg,
                        const std::string& data_dir,
                        const std::string& prior_path,
                        const std::string& angles_path,
                        const std::string& out_dir);

struct SampleOptions {
  std::string gen_path;
  std::string data_dir;
  std::string out_dir;
  std::string latents_path;  // optional frozen latents for controllable mode
  std::string split = "test";
  int window = 0;
  int K = 0;  // 0: config K
  int freeze_parts = 0;
  bool baseline = false;  // emit zero-velocity copies instead of model samples
};

CommandResult run_sample(const train::TrainConfig& cfg,
                         const SampleOptions& opts);

struct EvalOptions {
  std::string gen_path;  // exactly one of gen_path / pred_dir / baseline
  std::string pred_dir;
  bool baseline = false;
  std::string data_dir;
  std::string out_dir;
  std::string split = "test";
  int samples = 0;  // 0: config eval_samples
  int window = 0;   // window scored in pred_dir mode
};

CommandResult run_eval(const train::TrainConfig& cfg, const EvalOptions& opts,
                       eval::EvalReport* report_out = nullptr);

struct ExportOptions {
  std::string pred_path;  // motion file or directory of sample_*.motion
  std::string out_dir;
  std::string format = "csv";  // csv | json | svg
  char axis = 'z';             // projection axis dropped for svg
};

CommandResult run_export(const ExportOptions& opts);

/// Writes <out_dir>/manifest-<command>.json recording the exact inputs
/// (with content hashes), resolved config, seed and outputs of a run.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::vector<std::string>& argv_echo,
                    const train::TrainConfig* config, std::uint64_t seed,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    double wall_seconds);

}  // namespace motion::cli
