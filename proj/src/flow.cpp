#include "motion/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "motion/errors.hpp"
#include "motion/optim.hpp"
#include "motion/rng.hpp"
#include "motion/serialize.hpp"

namespace motion::flow {

namespace {

constexpr double kMinReflectionNorm2 = 1e-24;
constexpr double kLimbEps = 1e-6;

double log_normal_row(const double* h, int n) {
  double sq = 0.0;
  for (int i = 0; i < n; ++i) sq += h[i] * h[i];
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * sq;
}

}  // namespace

LayerParams::LayerParams(int dim, const std::string& name)
    : householder(Tensor(dim, dim), name + ".householder"),
      r_upper(Tensor(dim, dim), name + ".r_upper"),
      r_diag_raw(Tensor(1, dim), name + ".r_diag_raw"),
      bias(Tensor(1, dim), name + ".bias"),
      slope_raw(Tensor(1, 1), name + ".slope_raw") {}

FlowParams FlowParams::identity(int dim) {
  if (dim < 1) throw ConfigError("flow: dim must be >= 1");
  FlowParams p;
  p.dim = dim;
  p.layers.reserve(kLayers);
  for (int l = 0; l < kLayers; ++l)
    p.layers.emplace_back(dim, "flow.layer" + std::to_string(l));
  return p;
}

FlowParams FlowParams::init(int dim, std::uint64_t seed) {
  FlowParams p = identity(dim);
  std::mt19937_64 eng = rng::engine(rng::derive(seed, 0x70726972));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (LayerParams& layer : p.layers) {
    Tensor& hh = layer.householder.value();
    for (int i = 0; i < dim; ++i) {
      double norm = 0.0;
      for (int j = 0; j < dim; ++j) {
        hh(i, j) = normal(eng);
        norm += hh(i, j) * hh(i, j);
      }
      norm = std::sqrt(norm);
      for (int j = 0; j < dim; ++j) hh(i, j) /= norm;
    }
  }
  return p;
}

FlowParams FlowParams::random(int dim, std::uint64_t seed) {
  FlowParams p = init(dim, seed);
  std::mt19937_64 eng = rng::engine(rng::derive(seed, 0x72616e64));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(-0.5, 0.5);
  for (LayerParams& layer : p.layers) {
    Tensor& ru = layer.r_upper.value();
    for (int i = 0; i < dim; ++i)
      for (int j = i + 1; j < dim; ++j) ru(i, j) = 0.4 * normal(eng);
    for (int j = 0; j < dim; ++j) {
      layer.r_diag_raw.value()(0, j) = uni(eng);
      layer.bias.value()(0, j) = 0.5 * normal(eng);
    }
    layer.slope_raw.value()(0, 0) = uni(eng);
  }
  return p;
}

std::vector<diff::Parameter*> FlowParams::parameters() {
  std::vector<diff::Parameter*> out;
  for (LayerParams& layer : layers) {
    out.push_back(&layer.householder);
    out.push_back(&layer.r_upper);
    out.push_back(&layer.r_diag_raw);
    out.push_back(&layer.bias);
    out.push_back(&layer.slope_raw);
  }
  return out;
}

Tensor householder_orthogonal(const Tensor& vectors) {
  if (vectors.rows() != vectors.cols())
    throw DimensionError("householder: expected a square vector stack");
  const int n = vectors.rows();
  Tensor q = Tensor::identity(n);
  std::vector<double> qv(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += vectors(i, j) * vectors(i, j);
    if (s <= kMinReflectionNorm2) continue;  // zero vector: identity
    const double coef = 2.0 / s;
    for (int r = 0; r < n; ++r) {
      double acc = 0.0;
      for (int c = 0; c < n; ++c) acc += q(r, c) * vectors(i, c);
      qv[r] = acc;
    }
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) q(r, c) -= coef * qv[r] * vectors(i, c);
  }
  return q;
}

FrozenFlow freeze(const FlowParams& params) {
  FrozenFlow f;
  f.dim = params.dim;
  f.layers.reserve(params.layers.size());
  for (const LayerParams& layer : params.layers) {
    FrozenLayer fl;
    fl.q = householder_orthogonal(layer.householder.value());
    fl.r = Tensor(params.dim, params.dim);
    fl.log_det_r = 0.0;
    for (int i = 0; i < params.dim; ++i) {
      const double raw = layer.r_diag_raw.value()(0, i);
      fl.r(i, i) = std::exp(raw);
      fl.log_det_r += raw;
      for (int j = i + 1; j < params.dim; ++j)
        fl.r(i, j) = layer.r_upper.value()(i, j);
    }
    fl.qr = matmul(fl.q, fl.r);
    fl.bias = layer.bias.value();
    fl.log_slope = layer.slope_raw.value()(0, 0);
    fl.slope = std::exp(fl.log_slope);
    f.layers.push_back(std::move(fl));
  }
  return f;
}

ForwardResult forward(const FrozenFlow& flow, const Tensor& d) {
  if (d.rows() != 1 || d.cols() != flow.dim)
    throw DimensionError("flow forward: expected 1x" +
                         std::to_string(flow.dim));
  ForwardResult res;
  res.h = d;
  res.log_det = 0.0;
  for (const FrozenLayer& layer : flow.layers) {
    Tensor pre = matmul(res.h, layer.qr);
    pre += layer.bias;
    res.log_det += layer.log_det_r;
    for (int j = 0; j < flow.dim; ++j) {
      if (pre(0, j) > 0.0) continue;
      pre(0, j) *= layer.slope;
      res.log_det += layer.log_slope;
    }
    res.h = std::move(pre);
  }
  return res;
}

Tensor inverse(const FrozenFlow& flow, const Tensor& h) {
  if (h.rows() != 1 || h.cols() != flow.dim)
    throw DimensionError("flow inverse: expected 1x" +
                         std::to_string(flow.dim));
  const int n = flow.dim;
  Tensor x = h;
  for (auto it = flow.layers.rbegin(); it != flow.layers.rend(); ++it) {
    const FrozenLayer& layer = *it;
    // Positive slope keeps the sign, so the branch is recoverable from y.
    Tensor u = x;
    for (int j = 0; j < n; ++j)
      if (u(0, j) <= 0.0) u(0, j) /= layer.slope;
    u -= layer.bias;
    // Solve z * R = u by forward substitution over columns.
    Tensor z(1, n);
    for (int j = 0; j < n; ++j) {
      double acc = u(0, j);
      for (int i = 0; i < j; ++i) acc -= z(0, i) * layer.r(i, j);
      z(0, j) = acc / layer.r(j, j);
    }
    // x = z * Q^T
    Tensor next(1, n);
    for (int c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += z(0, i) * layer.q(c, i);
      next(0, c) = acc;
    }
    x = std::move(next);
  }
  return x;
}

double log_likelihood(const FrozenFlow& flow, const Tensor& d) {
  ForwardResult res = forward(flow, d);
  return log_normal_row(res.h.data(), flow.dim) + res.log_det;
}

// ---- limb directions ------------------------------------------------------

Tensor to_limb_directions(const Tensor& pose, const data::Skeleton& skeleton) {
  if (pose.rows() != 1 || pose.cols() != skeleton.coords())
    throw DimensionError("to_limb_directions: expected 1x" +
                         std::to_string(skeleton.coords()));
  Tensor out(1, 3 * skeleton.limbs());
  for (int l = 0; l < skeleton.limbs(); ++l) {
    const int j = skeleton.limb_joint(l);
    const int p = skeleton.parents[j];
    double v[3];
    double norm = 0.0;
    for (int k = 0; k < 3; ++k) {
      v[k] = pose(0, 3 * j + k) - pose(0, 3 * p + k);
      norm += v[k] * v[k];
    }
    norm = std::sqrt(norm);
    if (norm <= 1e-8)
      throw DataError("to_limb_directions: degenerate limb at joint '" +
                      skeleton.joint_names[j] + "'");
    for (int k = 0; k < 3; ++k) out(0, 3 * l + k) = v[k] / norm;
  }
  return out;
}

Tensor limb_direction_rows(const Tensor& frames,
                           const data::Skeleton& skeleton) {
  Tensor out(frames.rows(), 3 * skeleton.limbs());
  for (int f = 0; f < frames.rows(); ++f) {
    Tensor row = to_limb_directions(take_rows(frames, f, f + 1), skeleton);
    for (int c = 0; c < row.cols(); ++c) out(f, c) = row(0, c);
  }
  return out;
}

Tensor limb_diff_matrix(const data::Skeleton& skeleton) {
  Tensor g(skeleton.coords(), 3 * skeleton.limbs());
  for (int l = 0; l < skeleton.limbs(); ++l) {
    const int j = skeleton.limb_joint(l);
    const int p = skeleton.parents[j];
    for (int k = 0; k < 3; ++k) {
      g(3 * j + k, 3 * l + k) = 1.0;
      g(3 * p + k, 3 * l + k) = -1.0;
    }
  }
  return g;
}

// ---- differentiable paths ---------------------------------------------------

diff::Var log_likelihood_rows(diff::Tape& t, diff::Var dirs,
                              const FrozenFlow& flow) {
  if (dirs.cols() != flow.dim)
    throw DimensionError("log_likelihood_rows: expected dim " +
                         std::to_string(flow.dim));
  const int rows_n = dirs.rows();
  diff::Var h = dirs;
  double const_log_det = 0.0;
  diff::Var neg_counts;  // negatives per row, weighted by log slope
  bool have_counts = false;
  for (const FrozenLayer& layer : flow.layers) {
    diff::Var pre = diff::add_rowvec(diff::matmul(h, t.constant(layer.qr)),
                                     t.constant(layer.bias));
    const_log_det += layer.log_det_r;
    diff::Var counts =
        diff::scale(diff::rowsum(diff::negative_mask(pre)), layer.log_slope);
    neg_counts = have_counts ? diff::add(neg_counts, counts) : counts;
    have_counts = true;
    h = diff::prelu(pre, layer.slope);
  }
  diff::Var sq = diff::rowsum(diff::square(h));
  diff::Var log_norm = diff::add_scalar(
      diff::scale(sq, -0.5),
      -0.5 * flow.dim * std::log(2.0 * std::numbers::pi));
  diff::Var log_det = diff::add_scalar(neg_counts, const_log_det);
  (void)rows_n;
  return diff::add(log_norm, log_det);
}

namespace {

struct LayerVars {
  diff::Var qr;
  diff::Var bias;
  diff::Var slope;      // exp(slope_raw)
  diff::Var slope_raw;  // log of the slope
  diff::Var log_det_r;  // sum r_diag_raw
};

LayerVars build_layer(diff::Tape& t, LayerParams& layer, int dim,
                      const Tensor& strict_upper_mask) {
  LayerVars v;
  diff::Var hh = t.leaf(layer.householder);
  diff::Var q = t.constant(Tensor::identity(dim));
  for (int i = 0; i < dim; ++i) {
    diff::Var vec = diff::rows(hh, i, i + 1);
    diff::Var s = diff::sum(diff::square(vec));
    diff::Var s_c = diff::clamp(s, kMinReflectionNorm2,
                                std::numeric_limits<double>::infinity());
    diff::Var coef = diff::scale(diff::exp(diff::scale(diff::log(s_c), -1.0)),
                                 2.0);
    diff::Var outer = diff::matmul(diff::matmul(q, diff::transpose(vec)), vec);
    q = diff::sub(q, diff::scale(outer, coef));
  }
  diff::Var diag_raw = t.leaf(layer.r_diag_raw);
  diff::Var r = diff::add(
      diff::mul(t.leaf(layer.r_upper), t.constant(strict_upper_mask)),
      diff::diag_embed(diff::exp(diag_raw)));
  v.qr = diff::matmul(q, r);
  v.bias = t.leaf(layer.bias);
  v.slope_raw = t.leaf(layer.slope_raw);
  v.slope = diff::exp(v.slope_raw);
  v.log_det_r = diff::sum(diag_raw);
  return v;
}

}  // namespace

diff::Var nll_mean(diff::Tape& t, const Tensor& dirs_batch, FlowParams& params) {
  if (dirs_batch.cols() != params.dim)
    throw DimensionError("nll_mean: expected dim " +
                         std::to_string(params.dim));
  const int dim = params.dim;
  const int batch = dirs_batch.rows();
  Tensor mask(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) mask(i, j) = 1.0;

  diff::Var h = t.constant(dirs_batch);
  diff::Var log_det_rows;  // batch x 1
  bool have = false;
  for (LayerParams& layer : params.layers) {
    LayerVars lv = build_layer(t, layer, dim, mask);
    diff::Var pre = diff::add_rowvec(diff::matmul(h, lv.qr), lv.bias);
    diff::Var counts =
        diff::scale(diff::rowsum(diff::negative_mask(pre)), lv.slope_raw);
    diff::Var det_rows =
        diff::add(diff::tile_rows(lv.log_det_r, batch), counts);
    log_det_rows = have ? diff::add(log_det_rows, det_rows) : det_rows;
    have = true;
    h = diff::prelu(pre, lv.slope);
  }
  diff::Var log_norm = diff::add_scalar(
      diff::scale(diff::rowsum(diff::square(h)), -0.5),
      -0.5 * dim * std::log(2.0 * std::numbers::pi));
  diff::Var loglik = diff::add(log_norm, log_det_rows);
  return diff::scale(diff::mean(loglik), -1.0);
}

diff::Var nf_loss(diff::Tape& t, diff::Var frames,
                  const data::Skeleton& skeleton, const FrozenFlow& flow) {
  if (flow.dim != 3 * skeleton.limbs())
    throw DimensionError("nf_loss: prior dim " + std::to_string(flow.dim) +
                         " does not match skeleton with " +
                         std::to_string(skeleton.limbs()) + " limbs");
  diff::Var diffs = diff::matmul(frames, t.constant(limb_diff_matrix(skeleton)));
  diff::Var dirs = diff::normalize3_rows(diffs, kLimbEps);
  diff::Var loglik = log_likelihood_rows(t, dirs, flow);
  return diff::scale(diff::mean(loglik), -1.0);
}

double nf_loss_value(const Tensor& frames, const data::Skeleton& skeleton,
                     const FrozenFlow& flow) {
  diff::Tape t;
  return nf_loss(t, t.constant(frames), skeleton, flow).scalar();
}

// ---- training ----------------------------------------------------------------

double gaussian_nll(const Tensor& dirs) {
  double acc = 0.0;
  for (int i = 0; i < dirs.rows(); ++i)
    acc -= log_normal_row(dirs.data() + static_cast<std::size_t>(i) * dirs.cols(),
                          dirs.cols());
  return acc / dirs.rows();
}

namespace {

double frozen_mean_nll(const FrozenFlow& flow, const Tensor& dirs,
                       const std::vector<int>& idx) {
  double acc = 0.0;
  for (int i : idx)
    acc -= log_likelihood(flow, take_rows(dirs, i, i + 1));
  return acc / static_cast<double>(idx.size());
}

}  // namespace

PriorTrainResult train_prior(const Tensor& dirs, const PriorTrainConfig& cfg) {
  if (dirs.rows() < 2) throw ContractError("train_prior: dataset too small");
  if (cfg.epochs < 1 || cfg.batch < 1)
    throw ConfigError("train_prior: epochs and batch must be >= 1");

  const int n = dirs.rows();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 eng = rng::engine(rng::derive(cfg.seed, 0x73706c69));
  std::shuffle(order.begin(), order.end(), eng);
  const int val_n = std::clamp(static_cast<int>(n * cfg.val_fraction), 1, n - 1);
  std::vector<int> val_idx(order.begin(), order.begin() + val_n);
  std::vector<int> train_idx(order.begin() + val_n, order.end());

  PriorTrainResult result{FlowParams::init(dirs.cols(), cfg.seed), {}};
  train::Adam adam(result.params.parameters(), {.lr = cfg.lr});

  result.curve.push_back(
      {0, frozen_mean_nll(freeze(result.params), dirs, train_idx),
       frozen_mean_nll(freeze(result.params), dirs, val_idx)});

  std::mt19937_64 epoch_eng = rng::engine(rng::derive(cfg.seed, 0x65706f63));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), epoch_eng);
    double loss_acc = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at < train_idx.size(); at += cfg.batch) {
      const std::size_t end = std::min(at + cfg.batch, train_idx.size());
      Tensor batch(static_cast<int>(end - at), dirs.cols());
      for (std::size_t k = at; k < end; ++k)
        for (int c = 0; c < dirs.cols(); ++c)
          batch(static_cast<int>(k - at), c) = dirs(train_idx[k], c);
      try {
        diff::Tape t;
        diff::Var loss = nll_mean(t, batch, result.params);
        const double value = loss.scalar();
        if (!std::isfinite(value))
          throw TrainingError("train_prior: NaN loss");
        loss_acc += value;
        ++batches;
        adam.zero_grad();
        t.backward(loss);
        adam.step();
      } catch (const DomainError& e) {
        throw TrainingError(std::string("train_prior: aborted at epoch ") +
                            std::to_string(epoch) + ": " + e.what());
      }
    }
    result.curve.push_back(
        {epoch, loss_acc / std::max(1, batches),
         frozen_mean_nll(freeze(result.params), dirs, val_idx)});
  }
  return result;
}

// ---- checkpointing -------------------------------------------------------------

void save_prior(const std::string& path, const FlowParams& params) {
  nlohmann::json j;
  j["format"] = "motion-prior";
  j["version"] = 1;
  j["dim"] = params.dim;
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerParams& layer : params.layers) {
    nlohmann::json l;
    l["householder"] = tensor_to_json(layer.householder.value());
    l["r_upper"] = tensor_to_json(layer.r_upper.value());
    l["r_diag_raw"] = tensor_to_json(layer.r_diag_raw.value());
    l["bias"] = tensor_to_json(layer.bias.value());
    l["slope_raw"] = layer.slope_raw.value()(0, 0);
    layers.push_back(std::move(l));
  }
  j["layers"] = std::move(layers);
  save_json_file(path, j);
}

FlowParams load_prior(const std::string& path, int expected_dim) {
  nlohmann::json j = load_json_file(path);
  if (j.value("format", "") != "motion-prior")
    throw ParseError(path + ": not a prior checkpoint");
  if (j.value("version", 0) != 1)
    throw ParseError(path + ": unsupported checkpoint version");
  const int dim = j.at("dim").get<int>();
  if (dim != expected_dim)
    throw ConfigError(path + ": prior dim " + std::to_string(dim) +
                      " does not match the active skeleton (expected " +
                      std::to_string(expected_dim) + ")");
  if (j.at("layers").size() != kLayers)
    throw ParseError(path + ": expected " + std::to_string(kLayers) +
                     " layers");
  FlowParams params = FlowParams::identity(dim);
  for (int l = 0; l < kLayers; ++l) {
    const nlohmann::json& src = j.at("layers")[l];
    LayerParams& layer = params.layers[l];
    layer.householder.value() = tensor_from_json(src.at("householder"));
    layer.r_upper.value() = tensor_from_json(src.at("r_upper"));
    layer.r_diag_raw.value() = tensor_from_json(src.at("r_diag_raw"));
    layer.bias.value() = tensor_from_json(src.at("bias"));
    layer.slope_raw.value()(0, 0) = src.at("slope_raw").get<double>();
    if (layer.householder.value().rows() != dim ||
        layer.householder.value().cols() != dim ||
        layer.r_upper.value().rows() != dim || layer.bias.value().cols() != dim ||
        layer.r_diag_raw.value().cols() != dim)
      throw ParseError(path + ": layer " + std::to_string(l) +
                       " has inconsistent shapes");
  }
  return params;
}

}  // namespace motion::flow
