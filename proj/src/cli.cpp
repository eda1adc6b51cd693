#include "motion/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "motion/errors.hpp"
#include "motion/serialize.hpp"
#include "motion/synth.hpp"
#include "motion/version.hpp"

namespace motion::cli {

namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char out[20];
  std::snprintf(out, sizeof(out), "%016" PRIx64, v);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

std::string seq_name(const char* split, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d.motion", split, index);
  return buf;
}

Tensor stack_frames(const std::vector<data::MotionSequence>& seqs) {
  int rows = 0;
  for (const auto& s : seqs) rows += s.frame_count();
  if (rows == 0) throw ContractError("dataset split has no frames");
  Tensor out(rows, seqs[0].frames.cols());
  int at = 0;
  for (const auto& s : seqs) {
    std::copy(s.frames.values().begin(), s.frames.values().end(),
              out.data() + static_cast<std::size_t>(at) * out.cols());
    at += s.frame_count();
  }
  return out;
}

}  // namespace

namespace {

void ensure_out_dir(const std::string& out_dir) {
  if (out_dir.empty()) throw ConfigError("output directory not set");
  fs::create_directories(out_dir);
}

}  // namespace

const std::vector<data::MotionSequence>& Dataset::split(
    const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "'");
}

Dataset load_dataset(const std::string& dir) {
  const std::string splits_path = (fs::path(dir) / "splits.json").string();
  nlohmann::json j = load_json_file(splits_path);
  if (j.value("format", "") != "motion-splits")
    throw ParseError(splits_path + ": not a split manifest");
  Dataset ds;
  bool first = true;
  auto load_split = [&](const char* key,
                        std::vector<data::MotionSequence>& into) {
    for (const auto& name : j.at(key)) {
      data::MotionFile f = data::load_motion_file(
          (fs::path(dir) / name.get<std::string>()).string());
      if (first) {
        ds.skeleton = f.skeleton;
        ds.fps = f.sequence.fps;
        first = false;
      } else if (f.skeleton.fingerprint() != ds.skeleton.fingerprint()) {
        throw DataError(name.get<std::string>() +
                        ": skeleton differs from the rest of the dataset");
      }
      into.push_back(std::move(f.sequence));
    }
  };
  load_split("train", ds.train);
  load_split("val", ds.val);
  load_split("test", ds.test);
  if (first) throw DataError(splits_path + ": dataset is empty");
  return ds;
}

CommandResult run_synth(const train::TrainConfig& cfg,
                        const std::string& out_dir) {
  ensure_out_dir(out_dir);
  data::SynthSkeleton spec = data::desk_skeleton();
  const int total = cfg.synth_train + cfg.synth_val + cfg.synth_test;
  auto seqs = data::synth_generate(cfg.seed, total, cfg.synth_length, spec,
                                   cfg.synth_fps);

  CommandResult result;
  nlohmann::json splits;
  splits["format"] = "motion-splits";
  splits["version"] = 1;
  splits["skeleton"] = spec.skeleton.fingerprint();
  int at = 0;
  for (const auto& [key, count] :
       {std::pair<const char*, int>{"train", cfg.synth_train},
        {"val", cfg.synth_val},
        {"test", cfg.synth_test}}) {
    nlohmann::json names = nlohmann::json::array();
    for (int i = 0; i < count; ++i, ++at) {
      const std::string name = seq_name(key, i);
      data::save_motion_file((fs::path(out_dir) / name).string(),
                             spec.skeleton, seqs[at]);
      names.push_back(name);
      result.outputs.push_back(name);
    }
    splits[key] = std::move(names);
  }
  save_json_file((fs::path(out_dir) / "splits.json").string(), splits);
  result.outputs.push_back("splits.json");

  load_dataset(out_dir);  // validate everything written
  return result;
}

namespace {

Tensor all_train_directions(const Dataset& ds) {
  Tensor frames = stack_frames(ds.train);
  return flow::limb_direction_rows(frames, ds.skeleton);
}

}  // namespace

CommandResult run_train_prior(const train::TrainConfig& cfg,
                              const std::string& data_dir,
                              const std::string& out_dir) {
  ensure_out_dir(out_dir);
  Dataset ds = load_dataset(data_dir);
  Tensor dirs = all_train_directions(ds);

  flow::PriorTrainConfig pc;
  pc.epochs = cfg.prior_epochs;
  pc.batch = cfg.prior_batch;
  pc.lr = cfg.prior_lr;
  pc.seed = cfg.seed;
  flow::PriorTrainResult res = flow::train_prior(dirs, pc);

  const std::string prior_path = (fs::path(out_dir) / "prior.json").string();
  flow::save_prior(prior_path, res.params);

  std::ostringstream curve;
  curve << "epoch,train_nll,val_nll\n";
  for (const auto& p : res.curve)
    curve << p.epoch << "," << p.train_nll << "," << p.val_nll << "\n";
  const std::string curve_path =
      (fs::path(out_dir) / "prior_curve.csv").string();
  write_text(curve_path, curve.str());

  flow::load_prior(prior_path, 3 * ds.skeleton.limbs());  // validate
  return {{prior_path, curve_path}};
}

CommandResult run_mine_angles(const train::TrainConfig& cfg,
                              const std::string& data_dir,
                              const std::string& out_dir) {
  (void)cfg;
  ensure_out_dir(out_dir);
  Dataset ds = load_dataset(data_dir);
  Tensor frames = stack_frames(ds.train);
  std::vector<int> skipped;
  kin::AngleTable table = kin::mine_ranges(
      frames, ds.skeleton, kin::default_angle_specs(ds.skeleton), &skipped);
  for (std::size_t i = 0; i < skipped.size(); ++i)
    if (skipped[i] > 0)
      std::cerr << "mine-angles: skipped " << skipped[i]
                << " degenerate frames for " << table.specs[i].name << "\n";
  const std::string path = (fs::path(out_dir) / "angles.json").string();
  kin::save_angle_table(path, table, ds.skeleton);
  kin::load_angle_table(path, ds.skeleton);  // validate
  return {{path}};
}

CommandResult run_train(const train::TrainConfig& cfg,
                        const std::string& data_dir,
                        const std::string& prior_path,
                        const std::string& angles_path,
                        const std::string& out_dir) {
  ensure_out_dir(out_dir);
  Dataset ds = load_dataset(data_dir);
  flow::FrozenFlow prior =
      flow::freeze(flow::load_prior(prior_path, 3 * ds.skeleton.limbs()));
  kin::AngleTable angles = kin::load_angle_table(angles_path, ds.skeleton);

  train::TrainResult res = train::train_generator(
      cfg, ds.train, ds.val, ds.skeleton, prior, angles, out_dir);

  const std::string metrics_path =
      (fs::path(out_dir) / "metrics.csv").string();
  write_text(metrics_path, train::metrics_csv(res.log));

  gen::load_generator(res.final_checkpoint, ds.skeleton);  // validate
  return {{res.final_checkpoint, metrics_path}};
}

namespace {

const data::SampleWindow& pick_window(
    const std::vector<data::SampleWindow>& windows, int index,
    const std::string& what) {
  if (windows.empty()) throw ContractError(what + ": no windows in the split");
  if (index < 0 || index >= static_cast<int>(windows.size()))
    throw ConfigError(what + ": window " + std::to_string(index) +
                      " out of range (have " + std::to_string(windows.size()) +
                      ")");
  return windows[index];
}

std::vector<Tensor> load_frozen_latents(const std::string& path, int latent) {
  nlohmann::json j = load_json_file(path);
  std::vector<Tensor> out;
  for (const auto& row : j.at("latents")) {
    Tensor z(1, static_cast<int>(row.size()));
    for (int i = 0; i < z.cols(); ++i) z(0, i) = row[i].get<double>();
    if (z.cols() != latent)
      throw ConfigError(path + ": latent dimension " +
                        std::to_string(z.cols()) + " != " +
                        std::to_string(latent));
    out.push_back(std::move(z));
  }
  return out;
}

}  // namespace

CommandResult run_sample(const train::TrainConfig& cfg,
                         const SampleOptions& opts) {
  ensure_out_dir(opts.out_dir);
  Dataset ds = load_dataset(opts.data_dir);
  CommandResult result;

  if (opts.baseline) {
    const int K = opts.K > 0 ? opts.K : 1;
    auto windows =
        data::make_windows(ds.split(opts.split), cfg.H, cfg.T, cfg.stride());
    const data::SampleWindow& w = pick_window(windows, opts.window, "sample");
    Tensor future = eval::zero_velocity_baseline(w.past, cfg.T);
    for (int k = 0; k < K; ++k) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "sample_%03d.motion", k);
      data::MotionSequence seq{future, ds.fps};
      data::save_motion_file((fs::path(opts.out_dir) / buf).string(),
                             ds.skeleton, seq);
      result.outputs.push_back(buf);
    }
    return result;
  }

  gen::GeneratorStack stack = gen::load_generator(opts.gen_path, ds.skeleton);
  auto windows = data::make_windows(ds.split(opts.split), stack.basis.H,
                                    stack.basis.T, cfg.stride());
  const data::SampleWindow& w = pick_window(windows, opts.window, "sample");
  const int K = opts.K > 0 ? opts.K : cfg.K;

  std::vector<Tensor> futures;
  nlohmann::json latents_dump;
  if (opts.freeze_parts > 0) {
    std::vector<Tensor> frozen;
    if (!opts.latents_path.empty()) {
      frozen = load_frozen_latents(opts.latents_path, stack.latent);
      if (static_cast<int>(frozen.size()) < opts.freeze_parts)
        throw ConfigError("sample: file provides " +
                          std::to_string(frozen.size()) + " latents, need " +
                          std::to_string(opts.freeze_parts));
      frozen.resize(opts.freeze_parts);
    } else {
      for (int i = 0; i < opts.freeze_parts; ++i)
        frozen.push_back(
            gen::draw_latent(stack.latent, cfg.seed, 0x66727a, i));
    }
    futures = gen::controllable_sample(stack, w.past, frozen, K, cfg.seed);
    nlohmann::json rows = nlohmann::json::array();
    for (const Tensor& z : frozen) {
      nlohmann::json row = nlohmann::json::array();
      for (double v : z.values()) row.push_back(v);
      rows.push_back(std::move(row));
    }
    latents_dump["latents"] = std::move(rows);
    latents_dump["frozen_parts"] = opts.freeze_parts;
  } else {
    gen::PredictionSet set = gen::sample_tree(stack, w.past, K, cfg.seed);
    futures = std::move(set.futures);
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& level : set.levels) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const auto& node : level) {
        nlohmann::json n;
        n["parent"] = node.parent;
        nlohmann::json row = nlohmann::json::array();
        for (double v : node.z.values()) row.push_back(v);
        n["z"] = std::move(row);
        nodes.push_back(std::move(n));
      }
      levels.push_back(std::move(nodes));
    }
    latents_dump["levels"] = std::move(levels);
  }
  latents_dump["format"] = "motion-latents";
  latents_dump["seed"] = cfg.seed;

  for (std::size_t k = 0; k < futures.size(); ++k) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "sample_%03zu.motion", k);
    data::MotionSequence seq{futures[k], ds.fps};
    data::save_motion_file((fs::path(opts.out_dir) / buf).string(),
                           ds.skeleton, seq);
    result.outputs.push_back(buf);
  }
  save_json_file((fs::path(opts.out_dir) / "latents.json").string(),
                 latents_dump);
  result.outputs.push_back("latents.json");

  for (const std::string& name : result.outputs)
    if (name.ends_with(".motion"))
      data::load_motion_file((fs::path(opts.out_dir) / name).string());
  return result;
}

CommandResult run_eval(const train::TrainConfig& cfg, const EvalOptions& opts,
                       eval::EvalReport* report_out) {
  ensure_out_dir(opts.out_dir);
  Dataset ds = load_dataset(opts.data_dir);

  const int modes = (opts.gen_path.empty() ? 0 : 1) +
                    (opts.pred_dir.empty() ? 0 : 1) + (opts.baseline ? 1 : 0);
  if (modes != 1)
    throw ConfigError("eval: choose exactly one of --gen, --pred, --baseline");

  eval::EvalReport report;
  if (!opts.gen_path.empty()) {
    gen::GeneratorStack stack = gen::load_generator(opts.gen_path, ds.skeleton);
    auto windows = data::make_windows(ds.split(opts.split), stack.basis.H,
                                      stack.basis.T, cfg.stride());
    if (windows.empty()) throw ContractError("eval: no windows in the split");
    data::PseudoGtSet pseudo =
        data::mine_pseudo_gt(windows, cfg.pseudo_gt_threshold);
    const int samples = opts.samples > 0 ? opts.samples : cfg.eval_samples;
    report = eval::evaluate_model(stack, windows, pseudo, samples, cfg.seed);
  } else {
    auto windows =
        data::make_windows(ds.split(opts.split), cfg.H, cfg.T, cfg.stride());
    if (windows.empty()) throw ContractError("eval: no windows in the split");
    data::PseudoGtSet pseudo =
        data::mine_pseudo_gt(windows, cfg.pseudo_gt_threshold);
    if (opts.baseline) {
      report = eval::evaluate_baseline(windows, pseudo, cfg.T);
    } else {
      // Score externally-provided sample files against one window.
      const data::SampleWindow& w = pick_window(windows, opts.window, "eval");
      std::vector<Tensor> samples;
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(opts.pred_dir))
        if (entry.path().extension() == ".motion")
          files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const fs::path& p : files) {
        data::MotionFile f = data::load_motion_file(p.string());
        if (f.skeleton.fingerprint() != ds.skeleton.fingerprint())
          throw DataError(p.string() + ": skeleton mismatch");
        if (f.sequence.frame_count() != cfg.T)
          throw DataError(p.string() + ": expected " + std::to_string(cfg.T) +
                          " frames");
        samples.push_back(f.sequence.frames);
      }
      if (samples.empty())
        throw ContractError("eval: no .motion samples in " + opts.pred_dir);
      report.sequences = 1;
      report.samples_per_sequence = static_cast<int>(samples.size());
      report.apd = samples.size() >= 2 ? eval::apd(samples) : 0.0;
      report.ade = eval::ade(samples, w.future);
      report.fde = eval::fde(samples, w.future);
      std::vector<Tensor> pseudo_futures;
      for (int alt : pseudo.alternatives[opts.window])
        pseudo_futures.push_back(windows[alt].future);
      if (pseudo_futures.empty()) {
        report.skipped_mm = 1;
      } else {
        report.mmade = eval::mmade(samples, pseudo_futures);
        report.mmfde = eval::mmfde(samples, pseudo_futures);
      }
    }
  }

  const std::string csv_path = (fs::path(opts.out_dir) / "report.csv").string();
  write_text(csv_path, report.csv());
  std::cout << report.table();
  if (report_out) *report_out = report;
  return {{csv_path}};
}

namespace {

std::vector<std::pair<std::string, data::MotionFile>> load_predictions(
    const std::string& pred_path) {
  std::vector<std::pair<std::string, data::MotionFile>> out;
  if (fs::is_directory(pred_path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(pred_path))
      if (entry.path().extension() == ".motion") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& p : files)
      out.emplace_back(p.stem().string(), data::load_motion_file(p.string()));
  } else {
    out.emplace_back(fs::path(pred_path).stem().string(),
                     data::load_motion_file(pred_path));
  }
  if (out.empty())
    throw ContractError("export: no .motion files under " + pred_path);
  return out;
}

}  // namespace

CommandResult run_export(const ExportOptions& opts) {
  ensure_out_dir(opts.out_dir);
  auto preds = load_predictions(opts.pred_path);
  const data::Skeleton& skel = preds[0].second.skeleton;
  CommandResult result;

  if (opts.format == "csv") {
    std::ostringstream out;
    out << "sample,frame";
    for (const std::string& name : skel.joint_names)
      out << "," << name << "_x," << name << "_y," << name << "_z";
    out << "\n";
    char buf[32];
    for (std::size_t s = 0; s < preds.size(); ++s) {
      const Tensor& frames = preds[s].second.sequence.frames;
      for (int f = 0; f < frames.rows(); ++f) {
        out << s << "," << f;
        for (int c = 0; c < frames.cols(); ++c) {
          std::snprintf(buf, sizeof(buf), "%.9g", frames(f, c));
          out << "," << buf;
        }
        out << "\n";
      }
    }
    const std::string path =
        (fs::path(opts.out_dir) / "predictions.csv").string();
    write_text(path, out.str());
    result.outputs.push_back(path);
    return result;
  }

  if (opts.format == "json") {
    nlohmann::json j;
    j["format"] = "motion-predictions";
    j["joints"] = skel.joint_names;
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& [name, file] : preds) {
      nlohmann::json s;
      s["name"] = name;
      s["fps"] = file.sequence.fps;
      s["frames"] = tensor_to_json(file.sequence.frames);
      samples.push_back(std::move(s));
    }
    j["samples"] = std::move(samples);
    const std::string path =
        (fs::path(opts.out_dir) / "predictions.json").string();
    save_json_file(path, j);
    result.outputs.push_back(path);
    return result;
  }

  if (opts.format == "svg") {
    int ax = 0, ay = 1;
    switch (opts.axis) {
      case 'x': ax = 1; ay = 2; break;
      case 'y': ax = 0; ay = 2; break;
      case 'z': ax = 0; ay = 1; break;
      default: throw ConfigError("export: axis must be x, y or z");
    }
    char buf[160];
    for (std::size_t s = 0; s < preds.size(); ++s) {
      const Tensor& frames = preds[s].second.sequence.frames;
      for (int f = 0; f < frames.rows(); ++f) {
        std::ostringstream svg;
        svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"-1.2 "
               "-1.2 2.4 2.4\">\n";
        for (int j = 1; j < skel.joints(); ++j) {
          const int p = skel.parents[j];
          std::snprintf(buf, sizeof(buf),
                        "  <line x1=\"%.4f\" y1=\"%.4f\" x2=\"%.4f\" "
                        "y2=\"%.4f\" stroke=\"black\" stroke-width=\"0.02\"/>\n",
                        frames(f, 3 * p + ax), -frames(f, 3 * p + ay),
                        frames(f, 3 * j + ax), -frames(f, 3 * j + ay));
          svg << buf;
        }
        svg << "</svg>\n";
        std::snprintf(buf, sizeof(buf), "%s_frame%04d.svg",
                      preds[s].first.c_str(), f);
        const std::string path = (fs::path(opts.out_dir) / buf).string();
        write_text(path, svg.str());
        result.outputs.push_back(path);
      }
    }
    return result;
  }

  throw ConfigError("export: unknown format '" + opts.format + "'");
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const std::vector<std::string>& argv_echo,
                    const train::TrainConfig* config, std::uint64_t seed,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs,
                    double wall_seconds) {
  nlohmann::json j;
  j["format"] = "motion-manifest";
  j["version"] = 1;
  j["tool_version"] = kVersion;
  j["command"] = command;
  j["argv"] = argv_echo;
  if (config) j["config"] = config->to_json();
  j["seed"] = seed;
  nlohmann::json ins = nlohmann::json::array();
  for (const std::string& path : inputs) {
    nlohmann::json e;
    e["path"] = path;
    e["fnv64"] = hex64(fnv1a_file(path));
    ins.push_back(std::move(e));
  }
  j["inputs"] = std::move(ins);
  j["outputs"] = outputs;
  j["wall_clock_sec"] = wall_seconds;
  const auto now = std::chrono::system_clock::now();
  j["timestamp_unix"] =
      std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch())
          .count();
  save_json_file(
      (fs::path(out_dir) / ("manifest-" + command + ".json")).string(), j);
}

}  // namespace motion::cli
