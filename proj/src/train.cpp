#include "motion/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "motion/errors.hpp"
#include "motion/kernels.hpp"
#include "motion/metrics.hpp"
#include "motion/optim.hpp"
#include "motion/parallel.hpp"
#include "motion/rng.hpp"
#include "motion/serialize.hpp"

namespace motion::train {

void TrainConfig::validate() const {
  auto nonneg = [](double v, const char* name) {
    if (v < 0.0)
      throw ConfigError(std::string("config: ") + name + " must be >= 0");
  };
  nonneg(lambda_nf, "lambda_nf");
  nonneg(lambda_a, "lambda_a");
  nonneg(lambda_r, "lambda_r");
  nonneg(lambda_mm, "lambda_mm");
  nonneg(lambda_past, "lambda_past");
  nonneg(lambda_limb, "lambda_limb");
  bool any_d = false;
  for (double d : lambda_d) {
    nonneg(d, "lambda_d");
    any_d = any_d || d > 0.0;
  }
  if (any_d && K < 2)
    throw ConfigError("config: K must be >= 2 when a diversity weight is set");
  if (lambda_d.size() != alpha.size())
    throw ConfigError("config: lambda_d and alpha must have one entry per part");
  for (double a : alpha)
    if (a <= 0.0) throw ConfigError("config: alpha must be positive");
  if (K < 1) throw ConfigError("config: K must be >= 1");
  if (H < 1 || T < 1 || M < 1 || M > H + T)
    throw ConfigError("config: invalid H/T/M");
  if (batch_size < 1 || epochs < 1 || samples_per_epoch < 1)
    throw ConfigError("config: invalid schedule");
  if (hidden < 1 || latent < 1) throw ConfigError("config: invalid model size");
  if (pseudo_gt_threshold <= 0.0)
    throw ConfigError("config: pseudo_gt_threshold must be positive");
}

TrainConfig TrainConfig::preset(const std::string& name) {
  TrainConfig c;
  c.preset_name = name;
  if (name == "desk-synth") {
    return c;  // the defaults above
  }
  if (name == "h36m-paper") {
    c.K = 10;
    c.lambda_d = {8.0, 25.0};
    c.alpha = {100.0, 300.0};
    c.batch_size = 16;
    c.epochs = 500;
    c.samples_per_epoch = 5000;
    c.H = 25;
    c.T = 100;
    c.M = 20;
    c.hidden = 256;
    c.latent = 64;
    c.max_pseudo_gt = 64;
    return c;
  }
  if (name == "humaneva-paper") {
    c.K = 10;
    c.lambda_d = {5.0, 10.0};
    c.alpha = {15.0, 50.0};
    c.batch_size = 16;
    c.epochs = 500;
    c.samples_per_epoch = 2000;
    c.H = 15;
    c.T = 60;
    c.M = 8;
    c.hidden = 256;
    c.latent = 64;
    c.max_pseudo_gt = 64;
    return c;
  }
  throw ConfigError("config: unknown preset '" + name + "'");
}

namespace {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c = preset(j.value("preset", "desk-synth"));
  maybe(j, "partition", c.partition);
  maybe(j, "K", c.K);
  maybe(j, "lambda_nf", c.lambda_nf);
  maybe(j, "lambda_a", c.lambda_a);
  maybe(j, "lambda_d", c.lambda_d);
  maybe(j, "lambda_r", c.lambda_r);
  maybe(j, "lambda_mm", c.lambda_mm);
  maybe(j, "lambda_past", c.lambda_past);
  maybe(j, "lambda_limb", c.lambda_limb);
  maybe(j, "alpha", c.alpha);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "epochs", c.epochs);
  maybe(j, "samples_per_epoch", c.samples_per_epoch);
  maybe(j, "base_lr", c.base_lr);
  maybe(j, "seed", c.seed);
  maybe(j, "H", c.H);
  maybe(j, "T", c.T);
  maybe(j, "M", c.M);
  maybe(j, "pseudo_gt_threshold", c.pseudo_gt_threshold);
  maybe(j, "window_stride", c.window_stride);
  maybe(j, "hidden", c.hidden);
  maybe(j, "latent", c.latent);
  maybe(j, "max_pseudo_gt", c.max_pseudo_gt);
  maybe(j, "checkpoint_every", c.checkpoint_every);
  maybe(j, "val_windows", c.val_windows);
  maybe(j, "val_samples", c.val_samples);
  maybe(j, "prior_epochs", c.prior_epochs);
  maybe(j, "prior_batch", c.prior_batch);
  maybe(j, "prior_lr", c.prior_lr);
  maybe(j, "synth_train", c.synth_train);
  maybe(j, "synth_val", c.synth_val);
  maybe(j, "synth_test", c.synth_test);
  maybe(j, "synth_length", c.synth_length);
  maybe(j, "synth_fps", c.synth_fps);
  maybe(j, "eval_samples", c.eval_samples);
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
  return from_json(load_json_file(path));
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  j["preset"] = preset_name;
  j["partition"] = partition;
  j["K"] = K;
  j["lambda_nf"] = lambda_nf;
  j["lambda_a"] = lambda_a;
  j["lambda_d"] = lambda_d;
  j["lambda_r"] = lambda_r;
  j["lambda_mm"] = lambda_mm;
  j["lambda_past"] = lambda_past;
  j["lambda_limb"] = lambda_limb;
  j["alpha"] = alpha;
  j["batch_size"] = batch_size;
  j["epochs"] = epochs;
  j["samples_per_epoch"] = samples_per_epoch;
  j["base_lr"] = base_lr;
  j["seed"] = seed;
  j["H"] = H;
  j["T"] = T;
  j["M"] = M;
  j["pseudo_gt_threshold"] = pseudo_gt_threshold;
  j["window_stride"] = window_stride;
  j["hidden"] = hidden;
  j["latent"] = latent;
  j["max_pseudo_gt"] = max_pseudo_gt;
  j["checkpoint_every"] = checkpoint_every;
  j["val_windows"] = val_windows;
  j["val_samples"] = val_samples;
  j["prior_epochs"] = prior_epochs;
  j["prior_batch"] = prior_batch;
  j["prior_lr"] = prior_lr;
  j["synth_train"] = synth_train;
  j["synth_val"] = synth_val;
  j["synth_test"] = synth_test;
  j["synth_length"] = synth_length;
  j["synth_fps"] = synth_fps;
  j["eval_samples"] = eval_samples;
  return j;
}

namespace {

// Mean limb lengths over the observed frames.
Tensor history_limb_lengths(const Tensor& past, const data::Skeleton& skeleton) {
  Tensor per_frame = data::limb_lengths_frames(past, skeleton);
  Tensor mean(1, per_frame.cols());
  for (int c = 0; c < per_frame.cols(); ++c) {
    double acc = 0.0;
    for (int r = 0; r < per_frame.rows(); ++r) acc += per_frame(r, c);
    mean(0, c) = acc / per_frame.rows();
  }
  return mean;
}

template <typename Fn>
diff::Var named_term(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const DomainError& e) {
    throw TrainingError(std::string("loss term ") + name + ": " + e.what());
  }
}

}  // namespace

diff::Var window_total_loss(diff::Tape& t, gen::GeneratorStack& stack,
                            const gen::PastContext& ctx,
                            const WindowExample& example,
                            const TrainConfig& cfg,
                            const flow::FrozenFlow& prior,
                            const kin::AngleTable& angles,
                            std::uint64_t z_seed, LossBreakdown* breakdown) {
  const int N = stack.partition.count();
  const int H = stack.basis.H;
  const int T = stack.basis.T;
  if (static_cast<int>(cfg.lambda_d.size()) != N)
    throw ConfigError("config: lambda_d needs one entry per part");

  gen::TreeVars tree = gen::build_tree(t, stack, ctx, cfg.K, z_seed);
  const int leaves = static_cast<int>(tree.full_frames.size());

  std::vector<diff::Var> future_frames;
  future_frames.reserve(leaves);
  for (diff::Var full : tree.full_frames)
    future_frames.push_back(diff::rows(full, H, H + T));

  LossBreakdown bd;
  bd.d.assign(N, 0.0);
  diff::Var total = t.constant_scalar(0.0);
  auto add_term = [&](double weight, diff::Var term, double* slot) {
    *slot = term.scalar();
    total = diff::add(total, diff::scale(term, weight));
  };

  if (cfg.lambda_r > 0.0)
    add_term(cfg.lambda_r, named_term("L_r", [&] {
               return loss_r(t, future_frames, example.window->future);
             }),
             &bd.r);
  if (cfg.lambda_mm > 0.0) {
    std::vector<Tensor> pseudo;
    pseudo.reserve(example.pseudo.size());
    for (const Tensor* p : example.pseudo) pseudo.push_back(*p);
    if (pseudo.empty())
      std::cerr << "train: window " << example.window->source_id << "@"
                << example.window->start
                << " has no pseudo ground truth; L_mm contributes 0\n";
    add_term(cfg.lambda_mm, named_term("L_mm", [&] {
               return loss_mm(t, future_frames, pseudo);
             }),
             &bd.mm);
  }

  // Per-part diversity among siblings sharing a parent sample.
  for (int part = 0; part < N; ++part) {
    if (cfg.lambda_d[part] <= 0.0) continue;
    diff::Var term = named_term("L_d", [&] {
      std::vector<diff::Var> part_futures;
      const auto& coeffs = tree.part_coeffs[part];
      part_futures.reserve(coeffs.size());
      for (diff::Var c : coeffs) {
        diff::Var traj = dct::decode(t, c, stack.basis);
        part_futures.push_back(diff::cols(traj, H, H + T));
      }
      const int groups = static_cast<int>(coeffs.size()) / cfg.K;
      diff::Var acc;
      bool have = false;
      for (int g = 0; g < groups; ++g) {
        std::span<const diff::Var> siblings(part_futures.data() +
                                                static_cast<std::size_t>(g) * cfg.K,
                                            cfg.K);
        diff::Var group_loss = loss_d_group(t, siblings, cfg.alpha[part]);
        acc = have ? diff::add(acc, group_loss) : group_loss;
        have = true;
      }
      return diff::scale(acc, 1.0 / groups);
    });
    bd.d[part] = term.scalar();
    total = diff::add(total, diff::scale(term, cfg.lambda_d[part]));
  }

  auto mean_over_leaves = [&](const std::function<diff::Var(int)>& make) {
    diff::Var acc;
    for (int s = 0; s < leaves; ++s) {
      diff::Var term = make(s);
      acc = s == 0 ? term : diff::add(acc, term);
    }
    return diff::scale(acc, 1.0 / leaves);
  };

  if (cfg.lambda_nf > 0.0)
    add_term(cfg.lambda_nf, named_term("L_nf", [&] {
               return mean_over_leaves([&](int s) {
                 return flow::nf_loss(t, future_frames[s], stack.skeleton,
                                      prior);
               });
             }),
             &bd.nf);
  if (cfg.lambda_a > 0.0)
    add_term(cfg.lambda_a, named_term("L_a", [&] {
               return mean_over_leaves([&](int s) {
                 return kin::angle_loss_mean(t, future_frames[s], angles);
               });
             }),
             &bd.a);
  if (cfg.lambda_past > 0.0)
    add_term(cfg.lambda_past, named_term("L_past", [&] {
               return mean_over_leaves([&](int s) {
                 return loss_past(t, tree.full_frames[s],
                                  example.window->past);
               });
             }),
             &bd.past);
  if (cfg.lambda_limb > 0.0) {
    Tensor gt_lengths =
        history_limb_lengths(example.window->past, stack.skeleton);
    add_term(cfg.lambda_limb, named_term("L_limb", [&] {
               return mean_over_leaves([&](int s) {
                 return loss_limb(t, future_frames[s], gt_lengths,
                                  stack.skeleton);
               });
             }),
             &bd.limb);
  }

  bd.total = total.scalar();
  if (breakdown) *breakdown = std::move(bd);
  return total;
}

namespace {

std::vector<WindowExample> build_examples(
    const std::vector<data::SampleWindow>& windows,
    const data::PseudoGtSet& pseudo_set, int max_pseudo) {
  std::vector<WindowExample> examples(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w) {
    examples[w].window = &windows[w];
    const auto& alts = pseudo_set.alternatives[w];
    // Keep the closest alternatives when over the cap (ties by index).
    std::vector<std::pair<double, int>> ranked;
    ranked.reserve(alts.size());
    const std::size_t dim = windows[w].past.cols();
    for (int alt : alts)
      ranked.emplace_back(
          kernels::l2_distance(windows[w].last_pose(),
                               windows[alt].last_pose(), dim),
          alt);
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    const int keep = std::min<int>(max_pseudo, static_cast<int>(ranked.size()));
    for (int i = 0; i < keep; ++i)
      examples[w].pseudo.push_back(&windows[ranked[i].second].future);
  }
  return examples;
}

void accumulate_scaled(Tensor& into, const Tensor& g, double factor) {
  for (std::size_t i = 0; i < into.size(); ++i)
    into.data()[i] += factor * g.data()[i];
}

}  // namespace

TrainResult train_generator(const TrainConfig& cfg,
                            std::span<const data::MotionSequence> train_seqs,
                            std::span<const data::MotionSequence> val_seqs,
                            const data::Skeleton& skeleton,
                            const flow::FrozenFlow& prior,
                            const kin::AngleTable& angles,
                            const std::string& out_dir) {
  cfg.validate();
  gen::PartitionSpec partition =
      gen::PartitionSpec::by_name(cfg.partition, skeleton);
  if (static_cast<int>(cfg.lambda_d.size()) != partition.count())
    throw ConfigError("config: lambda_d needs one entry per part (" +
                      std::to_string(partition.count()) + ")");

  std::vector<data::SampleWindow> windows =
      data::make_windows(train_seqs, cfg.H, cfg.T, cfg.stride());
  if (windows.empty())
    throw ContractError("train: no training windows (sequences too short)");
  data::PseudoGtSet pseudo_set =
      data::mine_pseudo_gt(windows, cfg.pseudo_gt_threshold);
  std::vector<WindowExample> examples =
      build_examples(windows, pseudo_set, cfg.max_pseudo_gt);

  std::vector<data::SampleWindow> val_windows =
      data::make_windows(val_seqs, cfg.H, cfg.T, cfg.stride());
  if (static_cast<int>(val_windows.size()) > cfg.val_windows)
    val_windows.resize(cfg.val_windows);

  TrainResult result{
      gen::GeneratorStack::init(skeleton, partition, cfg.H, cfg.T, cfg.M,
                                cfg.hidden, cfg.latent, cfg.seed),
      {},
      {}};
  gen::GeneratorStack& stack = result.model;
  std::vector<diff::Parameter*> params = stack.parameters();
  Adam adam(params, {.lr = cfg.base_lr});

  const int steps =
      (cfg.samples_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  const int N = partition.count();

  namespace fs = std::filesystem;
  auto write_checkpoint = [&](const std::string& name) {
    if (out_dir.empty()) return std::string();
    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / name).string();
    gen::save_generator(path, stack);
    return path;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double scale = lr_decay(epoch);
    std::mt19937_64 pick =
        rng::engine(rng::derive(cfg.seed, 0x65706f68, epoch));
    std::uniform_int_distribution<int> window_dist(
        0, static_cast<int>(windows.size()) - 1);

    LossBreakdown epoch_mean;
    epoch_mean.d.assign(N, 0.0);
    int counted = 0;

    for (int step = 0; step < steps; ++step) {
      const int remaining = cfg.samples_per_epoch - step * cfg.batch_size;
      const int batch = std::min(cfg.batch_size, remaining);
      std::vector<int> picked(batch);
      for (int& idx : picked) idx = window_dist(pick);

      std::vector<diff::GradTable> tables(batch);
      std::vector<LossBreakdown> bds(batch);
      std::vector<std::string> failures(batch);
      par::for_each_index(batch, [&](int b) {
        try {
          const WindowExample& ex = examples[picked[b]];
          gen::PastContext ctx = gen::make_past_context(stack, ex.window->past);
          diff::Tape tape;
          diff::Var loss = window_total_loss(
              tape, stack, ctx, ex, cfg, prior, angles,
              rng::derive(cfg.seed ^ 0x7472656eULL, epoch, step, b), &bds[b]);
          tables[b] = tape.gradients(loss);
        } catch (const Error& e) {
          failures[b] = e.what();
        }
      });
      for (const std::string& f : failures)
        if (!f.empty())
          throw TrainingError("train: " + f +
                              (result.final_checkpoint.empty()
                                   ? ""
                                   : " (last checkpoint: " +
                                         result.final_checkpoint + ")"));

      for (const LossBreakdown& bd : bds) {
        if (bd.total > 1e6)
          throw TrainingError(
              "train: diverged (loss " + std::to_string(bd.total) + ")" +
              (result.final_checkpoint.empty()
                   ? ""
                   : "; last good checkpoint: " + result.final_checkpoint));
        epoch_mean.nf += bd.nf;
        epoch_mean.a += bd.a;
        epoch_mean.r += bd.r;
        epoch_mean.mm += bd.mm;
        epoch_mean.past += bd.past;
        epoch_mean.limb += bd.limb;
        epoch_mean.total += bd.total;
        for (int p = 0; p < N; ++p) epoch_mean.d[p] += bd.d[p];
        ++counted;
      }

      // Fixed, index-ordered gradient reduction keeps runs bit-reproducible
      // for any thread count.
      adam.zero_grad();
      const double inv_batch = 1.0 / batch;
      for (diff::Parameter* p : params)
        for (int b = 0; b < batch; ++b) {
          auto it = tables[b].find(p);
          if (it != tables[b].end())
            accumulate_scaled(p->grad(), it->second, inv_batch);
        }
      adam.step(scale);
    }

    EpochLog log_entry;
    log_entry.epoch = epoch;
    log_entry.lr_scale = scale;
    const double inv = counted > 0 ? 1.0 / counted : 0.0;
    log_entry.mean.nf = epoch_mean.nf * inv;
    log_entry.mean.a = epoch_mean.a * inv;
    log_entry.mean.r = epoch_mean.r * inv;
    log_entry.mean.mm = epoch_mean.mm * inv;
    log_entry.mean.past = epoch_mean.past * inv;
    log_entry.mean.limb = epoch_mean.limb * inv;
    log_entry.mean.total = epoch_mean.total * inv;
    log_entry.mean.d.resize(N);
    for (int p = 0; p < N; ++p) log_entry.mean.d[p] = epoch_mean.d[p] * inv;

    if (!val_windows.empty()) {
      std::vector<std::vector<Tensor>> samples(val_windows.size());
      par::for_each_index(static_cast<int>(val_windows.size()), [&](int w) {
        samples[w] = gen::sample_paths(
            stack, val_windows[w].past, cfg.val_samples,
            rng::derive(cfg.seed, 0x76616c69, epoch, w));
      });
      double apd_acc = 0.0, ade_acc = 0.0;
      for (std::size_t w = 0; w < val_windows.size(); ++w) {
        apd_acc += eval::apd(samples[w]);
        ade_acc += eval::ade(samples[w], val_windows[w].future);
      }
      log_entry.val_apd = apd_acc / val_windows.size();
      log_entry.val_ade = ade_acc / val_windows.size();
    }
    result.log.push_back(std::move(log_entry));

    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0)
      result.final_checkpoint =
          write_checkpoint("generator-epoch" + std::to_string(epoch) + ".json");
  }

  const std::string final_path = write_checkpoint("generator.json");
  if (!final_path.empty()) result.final_checkpoint = final_path;
  return result;
}

std::string metrics_csv(std::span<const EpochLog> log) {
  std::ostringstream out;
  const int n_parts = log.empty() ? 0 : static_cast<int>(log[0].mean.d.size());
  out << "epoch,nf,a";
  for (int p = 0; p < n_parts; ++p) out << ",d" << (p + 1);
  out << ",r,mm,past,limb,total,lr_scale,val_apd,val_ade\n";
  for (const EpochLog& e : log) {
    out << e.epoch << "," << e.mean.nf << "," << e.mean.a;
    for (int p = 0; p < n_parts; ++p) out << "," << e.mean.d[p];
    out << "," << e.mean.r << "," << e.mean.mm << "," << e.mean.past << ","
        << e.mean.limb << "," << e.mean.total << "," << e.lr_scale << ","
        << e.val_apd << "," << e.val_ade << "\n";
  }
  return out.str();
}

}  // namespace motion::train
