#include <chrono>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "motion/cli.hpp"
#include "motion/errors.hpp"
#include "motion/version.hpp"

namespace {

using motion::train::TrainConfig;

struct GlobalArgs {
  std::string config_path;
  std::string preset = "desk-synth";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir;
};

TrainConfig resolve_config(const GlobalArgs& g) {
  TrainConfig cfg = g.config_path.empty()
                        ? TrainConfig::preset(g.preset)
                        : TrainConfig::from_json_file(g.config_path);
  if (g.seed_set) cfg.seed = g.seed;
  cfg.validate();
  return cfg;
}

void add_global(CLI::App* cmd, GlobalArgs& g, bool need_out = true) {
  cmd->add_option("--config", g.config_path, "JSON run config");
  cmd->add_option("--preset", g.preset,
                  "named preset: desk-synth, h36m-paper, humaneva-paper");
  cmd->add_option("--seed", g.seed, "seed override")
      ->each([&g](const std::string&) { g.seed_set = true; });
  auto* out = cmd->add_option("--out", g.out_dir, "output directory");
  if (need_out) out->required();
}

std::vector<std::string> echo_argv(int argc, char** argv) {
  return std::vector<std::string>(argv, argv + argc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"diverse and controllable motion prediction toolkit"};
  app.set_version_flag("--version", std::string("motion ") + motion::kVersion);
  app.require_subcommand(1);

  GlobalArgs g;
  std::string data_dir, prior_path, angles_path;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_global(synth, g);

  CLI::App* train_prior =
      app.add_subcommand("train-prior", "train the pose prior");
  add_global(train_prior, g);
  train_prior->add_option("--data", data_dir, "dataset directory")->required();

  CLI::App* mine =
      app.add_subcommand("mine-angles", "mine joint-angle ranges");
  add_global(mine, g);
  mine->add_option("--data", data_dir, "dataset directory")->required();

  CLI::App* train = app.add_subcommand("train", "train the generator");
  add_global(train, g);
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--prior", prior_path, "prior checkpoint")->required();
  train->add_option("--angles", angles_path, "angle table")->required();

  motion::cli::SampleOptions sopts;
  CLI::App* sample = app.add_subcommand("sample", "sample future motions");
  add_global(sample, g);
  sample->add_option("--data", sopts.data_dir, "dataset directory")->required();
  sample->add_option("--gen", sopts.gen_path, "generator checkpoint");
  sample->add_option("-K,--samples-per-part", sopts.K,
                     "branching factor (tree mode) or future count");
  sample->add_option("--freeze-parts", sopts.freeze_parts,
                     "number of leading parts to control");
  sample->add_option("--latents", sopts.latents_path,
                     "frozen latent codes (JSON)");
  sample->add_option("--window", sopts.window, "window index in the split");
  sample->add_option("--split", sopts.split, "train|val|test");
  sample->add_flag("--baseline", sopts.baseline,
                   "emit zero-velocity baseline copies");

  motion::cli::EvalOptions eopts;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate predictions");
  add_global(eval_cmd, g);
  eval_cmd->add_option("--data", eopts.data_dir, "dataset directory")
      ->required();
  eval_cmd->add_option("--gen", eopts.gen_path, "generator checkpoint");
  eval_cmd->add_option("--pred", eopts.pred_dir,
                       "directory of sample_*.motion to score");
  eval_cmd->add_flag("--baseline", eopts.baseline,
                     "score the zero-velocity baseline");
  eval_cmd->add_option("--samples", eopts.samples, "futures per sequence");
  eval_cmd->add_option("--window", eopts.window,
                       "window index scored in --pred mode");
  eval_cmd->add_option("--split", eopts.split, "train|val|test");

  motion::cli::ExportOptions xopts;
  std::string axis = "z";
  CLI::App* export_cmd =
      app.add_subcommand("export", "export predictions for plotting");
  add_global(export_cmd, g);
  export_cmd->add_option("--pred", xopts.pred_path,
                         "motion file or sample directory")
      ->required();
  export_cmd->add_option("--format", xopts.format, "csv | json | svg");
  export_cmd->add_option("--axis", axis, "projection axis for svg (x|y|z)");

  CLI11_PARSE(app, argc, argv);

  const auto t0 = std::chrono::steady_clock::now();
  try {
    motion::cli::CommandResult result;
    std::string command;
    std::vector<std::string> inputs;
    TrainConfig cfg = resolve_config(g);

    if (synth->parsed()) {
      command = "synth";
      result = motion::cli::run_synth(cfg, g.out_dir);
    } else if (train_prior->parsed()) {
      command = "train-prior";
      inputs = {data_dir + "/splits.json"};
      result = motion::cli::run_train_prior(cfg, data_dir, g.out_dir);
    } else if (mine->parsed()) {
      command = "mine-angles";
      inputs = {data_dir + "/splits.json"};
      result = motion::cli::run_mine_angles(cfg, data_dir, g.out_dir);
    } else if (train->parsed()) {
      command = "train";
      inputs = {data_dir + "/splits.json", prior_path, angles_path};
      result =
          motion::cli::run_train(cfg, data_dir, prior_path, angles_path,
                                 g.out_dir);
    } else if (sample->parsed()) {
      command = "sample";
      sopts.out_dir = g.out_dir;
      if (!sopts.baseline && sopts.gen_path.empty())
        throw motion::ConfigError("sample: --gen is required without --baseline");
      inputs = {sopts.data_dir + "/splits.json"};
      if (!sopts.gen_path.empty()) inputs.push_back(sopts.gen_path);
      if (!sopts.latents_path.empty()) inputs.push_back(sopts.latents_path);
      result = motion::cli::run_sample(cfg, sopts);
    } else if (eval_cmd->parsed()) {
      command = "eval";
      eopts.out_dir = g.out_dir;
      inputs = {eopts.data_dir + "/splits.json"};
      if (!eopts.gen_path.empty()) inputs.push_back(eopts.gen_path);
      result = motion::cli::run_eval(cfg, eopts);
    } else if (export_cmd->parsed()) {
      command = "export";
      xopts.out_dir = g.out_dir;
      if (axis.size() != 1)
        throw motion::ConfigError("export: axis must be x, y or z");
      xopts.axis = axis[0];
      result = motion::cli::run_export(xopts);
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    motion::cli::write_manifest(g.out_dir, command, echo_argv(argc, argv),
                                &cfg, cfg.seed, inputs, result.outputs, wall);
    std::cout << command << ": wrote " << result.outputs.size()
              << " outputs to " << g.out_dir << "\n";
    return 0;
  } catch (const motion::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 2;
  }
}
