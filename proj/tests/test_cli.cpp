#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "motion/cli.hpp"
#include "motion/errors.hpp"
#include "motion/serialize.hpp"

namespace fs = std::filesystem;
namespace cli = motion::cli;
namespace gen = motion::gen;
using motion::train::TrainConfig;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "motion_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig tiny_config() {
  TrainConfig cfg = TrainConfig::preset("desk-synth");
  cfg.synth_train = 6;
  cfg.synth_val = 2;
  cfg.synth_test = 2;
  cfg.synth_length = 40;
  cfg.prior_epochs = 2;
  cfg.epochs = 1;
  cfg.samples_per_epoch = 4;
  cfg.batch_size = 4;
  cfg.K = 2;
  cfg.val_windows = 2;
  cfg.val_samples = 3;
  cfg.eval_samples = 4;
  cfg.seed = 13;
  return cfg;
}

struct Pipeline {
  fs::path root;
  TrainConfig cfg;
  std::string data, prior, angles, gen;

  static const Pipeline& instance() {
    static Pipeline p = [] {
      Pipeline pl;
      pl.root = fresh_dir("pipeline");
      pl.cfg = tiny_config();
      pl.data = (pl.root / "data").string();
      pl.prior = (pl.root / "prior").string();
      pl.angles = (pl.root / "angles").string();
      pl.gen = (pl.root / "gen").string();
      cli::run_synth(pl.cfg, pl.data);
      cli::run_train_prior(pl.cfg, pl.data, pl.prior);
      cli::run_mine_angles(pl.cfg, pl.data, pl.angles);
      cli::run_train(pl.cfg, pl.data, pl.prior + "/prior.json",
                     pl.angles + "/angles.json", pl.gen);
      return pl;
    }();
    return p;
  }
};

}  // namespace

TEST_CASE("synth writes the configured split and reloads cleanly") {
  TrainConfig cfg = tiny_config();
  const fs::path out = fresh_dir("synth");
  cli::CommandResult res = cli::run_synth(cfg, out.string());
  // 6 + 2 + 2 sequences plus splits.json
  CHECK(res.outputs.size() == 11);

  cli::Dataset ds = cli::load_dataset(out.string());
  CHECK(ds.train.size() == 6);
  CHECK(ds.val.size() == 2);
  CHECK(ds.test.size() == 2);
  CHECK(ds.skeleton.joints() == 12);

  // Default config emits the full 200/20/20 split.
  TrainConfig full = TrainConfig::preset("desk-synth");
  CHECK(full.synth_train == 200);
  CHECK(full.synth_val == 20);
  CHECK(full.synth_test == 20);
}

TEST_CASE("synth is byte-identical per seed") {
  TrainConfig cfg = tiny_config();
  const fs::path a = fresh_dir("synth_a");
  const fs::path b = fresh_dir("synth_b");
  cli::run_synth(cfg, a.string());
  cli::run_synth(cfg, b.string());
  for (const auto& entry : fs::directory_iterator(a))
    CHECK(slurp(entry.path()) == slurp(b / entry.path().filename()));

  // A different seed changes the data.
  cfg.seed = 14;
  const fs::path c = fresh_dir("synth_c");
  cli::run_synth(cfg, c.string());
  CHECK(slurp(a / "train_000.motion") != slurp(c / "train_000.motion"));
}

TEST_CASE("pipeline artifacts exist and validate") {
  const Pipeline& p = Pipeline::instance();
  CHECK(fs::exists(fs::path(p.prior) / "prior.json"));
  CHECK(fs::exists(fs::path(p.prior) / "prior_curve.csv"));
  CHECK(fs::exists(fs::path(p.angles) / "angles.json"));
  CHECK(fs::exists(fs::path(p.gen) / "generator.json"));
  CHECK(fs::exists(fs::path(p.gen) / "metrics.csv"));

  // metrics.csv has a header and one row per epoch.
  std::istringstream csv(slurp(fs::path(p.gen) / "metrics.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 1 + p.cfg.epochs);
}

TEST_CASE("missing upstream artifacts give actionable errors") {
  const Pipeline& p = Pipeline::instance();
  CHECK_THROWS_AS(cli::run_train(p.cfg, p.data, p.prior + "/missing.json",
                                 p.angles + "/angles.json",
                                 (p.root / "gen2").string()),
                  motion::IoError);
  CHECK_THROWS_AS(cli::load_dataset((p.root / "nowhere").string()),
                  motion::IoError);
}

TEST_CASE("sample tree mode writes K^N futures") {
  const Pipeline& p = Pipeline::instance();
  cli::SampleOptions opts;
  opts.gen_path = p.gen + "/generator.json";
  opts.data_dir = p.data;
  opts.out_dir = (p.root / "samples_tree").string();
  opts.K = 3;
  cli::CommandResult res = cli::run_sample(p.cfg, opts);
  int motions = 0;
  for (const std::string& o : res.outputs)
    if (o.ends_with(".motion")) ++motions;
  CHECK(motions == 9);  // K^N with N = 2
  CHECK(fs::exists(fs::path(opts.out_dir) / "latents.json"));
}

TEST_CASE("frozen latents give byte-identical controlled parts") {
  const Pipeline& p = Pipeline::instance();
  cli::SampleOptions opts;
  opts.gen_path = p.gen + "/generator.json";
  opts.data_dir = p.data;
  opts.out_dir = (p.root / "samples_ctl").string();
  opts.K = 5;
  opts.freeze_parts = 1;
  cli::run_sample(p.cfg, opts);

  // Reusing the emitted latents with a different seed reproduces the
  // controlled part exactly.
  cli::SampleOptions again = opts;
  again.out_dir = (p.root / "samples_ctl2").string();
  again.latents_path = (fs::path(opts.out_dir) / "latents.json").string();
  TrainConfig cfg2 = p.cfg;
  cfg2.seed = 999;
  cli::run_sample(cfg2, again);

  cli::Dataset ds = cli::load_dataset(p.data);
  gen::GeneratorStack stack =
      motion::gen::load_generator(opts.gen_path, ds.skeleton);
  const auto& lower = stack.partition.parts[0];

  auto read = [&](const fs::path& dir, int k) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%03d.motion", k);
    return motion::data::load_motion_file((dir / buf).string());
  };
  motion::data::MotionFile ref = read(opts.out_dir, 0);
  for (int k = 0; k < 5; ++k) {
    motion::data::MotionFile a = read(opts.out_dir, k);
    motion::data::MotionFile b = read(again.out_dir, k);
    for (int f = 0; f < a.sequence.frame_count(); ++f)
      for (int j : lower)
        for (int c = 0; c < 3; ++c) {
          CHECK(a.sequence.frames(f, 3 * j + c) ==
                ref.sequence.frames(f, 3 * j + c));
          CHECK(b.sequence.frames(f, 3 * j + c) ==
                ref.sequence.frames(f, 3 * j + c));
        }
  }
}

TEST_CASE("baseline dump scores zero diversity") {
  const Pipeline& p = Pipeline::instance();
  cli::SampleOptions opts;
  opts.data_dir = p.data;
  opts.out_dir = (p.root / "baseline_dump").string();
  opts.baseline = true;
  opts.K = 4;
  cli::run_sample(p.cfg, opts);

  cli::EvalOptions eopts;
  eopts.data_dir = p.data;
  eopts.pred_dir = opts.out_dir;
  eopts.out_dir = (p.root / "baseline_eval").string();
  motion::eval::EvalReport report;
  cli::run_eval(p.cfg, eopts, &report);
  CHECK(report.apd == 0.0);
  CHECK(report.ade > 0.0);
  CHECK(fs::exists(fs::path(eopts.out_dir) / "report.csv"));
}

TEST_CASE("model evaluation produces a report") {
  const Pipeline& p = Pipeline::instance();
  cli::EvalOptions eopts;
  eopts.data_dir = p.data;
  eopts.gen_path = p.gen + "/generator.json";
  eopts.out_dir = (p.root / "model_eval").string();
  eopts.samples = 4;
  motion::eval::EvalReport report;
  cli::run_eval(p.cfg, eopts, &report);
  CHECK(report.sequences > 0);
  CHECK(report.samples_per_sequence == 4);
  CHECK(report.per_part_apd.size() == 2);
  CHECK(report.ade >= 0.0);

  CHECK_THROWS_AS(cli::run_eval(p.cfg, cli::EvalOptions{}, nullptr),
                  motion::Error);
}

TEST_CASE("export formats") {
  const Pipeline& p = Pipeline::instance();
  const fs::path dump = p.root / "samples_tree";  // written above

  // CSV: one row per frame per sample.
  cli::ExportOptions csv;
  csv.pred_path = dump.string();
  csv.out_dir = (p.root / "export_csv").string();
  csv.format = "csv";
  cli::run_export(csv);
  std::istringstream lines(slurp(fs::path(csv.out_dir) / "predictions.csv"));
  std::string line;
  int rows = -1;  // header
  while (std::getline(lines, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 9 * p.cfg.T);

  // JSON round-trips coordinates exactly.
  cli::ExportOptions json_opts;
  json_opts.pred_path = (dump / "sample_000.motion").string();
  json_opts.out_dir = (p.root / "export_json").string();
  json_opts.format = "json";
  cli::run_export(json_opts);
  nlohmann::json j = motion::load_json_file(
      (fs::path(json_opts.out_dir) / "predictions.json").string());
  motion::Tensor frames = motion::tensor_from_json(j["samples"][0]["frames"]);
  motion::data::MotionFile orig =
      motion::data::load_motion_file(json_opts.pred_path);
  CHECK(frames.equals(orig.sequence.frames));

  // SVG: one file per frame with J-1 line segments.
  cli::ExportOptions svg;
  svg.pred_path = json_opts.pred_path;
  svg.out_dir = (p.root / "export_svg").string();
  svg.format = "svg";
  cli::CommandResult res = cli::run_export(svg);
  CHECK(static_cast<int>(res.outputs.size()) == p.cfg.T);
  const std::string first = slurp(res.outputs[0]);
  std::size_t count = 0, at = 0;
  while ((at = first.find("<line", at)) != std::string::npos) {
    ++count;
    at += 5;
  }
  CHECK(count == 11);  // J - 1 for the 12-joint skeleton

  cli::ExportOptions bad = svg;
  bad.format = "gif";
  CHECK_THROWS_AS(cli::run_export(bad), motion::ConfigError);
}

TEST_CASE("manifest records inputs with hashes") {
  const Pipeline& p = Pipeline::instance();
  const fs::path out = p.root / "manifest_test";
  fs::create_directories(out);
  cli::write_manifest(out.string(), "train", {"motion", "train"}, &p.cfg,
                      p.cfg.seed, {p.prior + "/prior.json"}, {"generator.json"},
                      1.5);
  nlohmann::json j =
      motion::load_json_file((out / "manifest-train.json").string());
  CHECK(j["command"] == "train");
  CHECK(j["inputs"][0]["fnv64"].get<std::string>().size() == 16);
  CHECK(j["config"]["K"] == p.cfg.K);
  CHECK(j["outputs"][0] == "generator.json");
}
