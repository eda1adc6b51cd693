#include "motion/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "motion/errors.hpp"
#include "motion/rng.hpp"
#include "motion/serialize.hpp"

namespace motion::gen {

int PartitionSpec::coords_upto(int i) const {
  int n = 0;
  for (int p = 0; p <= i; ++p) n += part_coords(p);
  return n;
}

std::vector<int> PartitionSpec::node_coords(int upto_part) const {
  std::vector<int> coords;
  for (int p = 0; p <= upto_part; ++p)
    for (int j : parts[p])
      for (int k = 0; k < 3; ++k) coords.push_back(3 * j + k);
  return coords;
}

Tensor PartitionSpec::node_to_coord_permutation(int coords) const {
  const std::vector<int> order = node_coords(count() - 1);
  if (static_cast<int>(order.size()) != coords)
    throw DimensionError("partition: covers " +
                         std::to_string(order.size()) + " of " +
                         std::to_string(coords) + " coordinates");
  Tensor p(coords, coords);
  for (int node_row = 0; node_row < coords; ++node_row)
    p(order[node_row], node_row) = 1.0;
  return p;
}

void PartitionSpec::validate(const data::Skeleton& skeleton) const {
  if (parts.empty()) throw ConfigError("partition: no parts");
  if (names.size() != parts.size())
    throw ConfigError("partition: name/part count mismatch");
  std::set<int> seen;
  for (const auto& part : parts) {
    if (part.empty()) throw ConfigError("partition: empty part");
    for (int j : part) {
      if (j < 0 || j >= skeleton.joints())
        throw ConfigError("partition: joint index " + std::to_string(j) +
                          " out of range");
      if (!seen.insert(j).second)
        throw ConfigError("partition: joint " + std::to_string(j) +
                          " appears twice");
    }
  }
  if (static_cast<int>(seen.size()) != skeleton.joints())
    throw ConfigError("partition: does not cover every joint");
}

namespace {

std::vector<int> remaining_joints(const data::Skeleton& skeleton,
                                  const std::vector<int>& taken) {
  std::vector<int> out;
  for (int j = 0; j < skeleton.joints(); ++j)
    if (std::find(taken.begin(), taken.end(), j) == taken.end())
      out.push_back(j);
  return out;
}

}  // namespace

PartitionSpec PartitionSpec::lower_upper(const data::Skeleton& skeleton) {
  PartitionSpec spec;
  spec.names = {"lower", "upper"};
  std::vector<int> lower;
  for (int j = 0; j < skeleton.joints(); ++j) {
    const std::string& n = skeleton.joint_names[j];
    if (n.find("hip") != std::string::npos ||
        n.find("knee") != std::string::npos ||
        n.find("ankle") != std::string::npos ||
        n.find("foot") != std::string::npos)
      lower.push_back(j);
  }
  if (lower.empty())
    throw ConfigError("partition: no lower-body joints recognized");
  spec.parts = {lower, remaining_joints(skeleton, lower)};
  spec.validate(skeleton);
  return spec;
}

PartitionSpec PartitionSpec::five_part(const data::Skeleton& skeleton) {
  PartitionSpec spec;
  spec.names = {"torso", "rleg", "lleg", "rarm", "larm"};
  auto side = [&](char prefix, std::initializer_list<const char*> stems) {
    std::vector<int> out;
    for (const char* stem : stems) {
      const int idx = skeleton.joint_index(std::string(1, prefix) + stem);
      if (idx >= 0) out.push_back(idx);
    }
    return out;
  };
  std::vector<int> rleg = side('r', {"hip", "knee", "ankle"});
  std::vector<int> lleg = side('l', {"hip", "knee", "ankle"});
  std::vector<int> rarm = side('r', {"shoulder", "elbow", "wrist"});
  std::vector<int> larm = side('l', {"shoulder", "elbow", "wrist"});
  if (rleg.empty() || lleg.empty() || rarm.empty() || larm.empty())
    throw ConfigError("partition: five-part split needs legs and arms");
  std::vector<int> taken;
  for (const auto* v : {&rleg, &lleg, &rarm, &larm})
    taken.insert(taken.end(), v->begin(), v->end());
  spec.parts = {remaining_joints(skeleton, taken), rleg, lleg, rarm, larm};
  spec.validate(skeleton);
  return spec;
}

PartitionSpec PartitionSpec::whole_body(const data::Skeleton& skeleton) {
  PartitionSpec spec;
  spec.names = {"body"};
  std::vector<int> all(skeleton.joints());
  for (int j = 0; j < skeleton.joints(); ++j) all[j] = j;
  spec.parts = {all};
  spec.validate(skeleton);
  return spec;
}

PartitionSpec PartitionSpec::by_name(const std::string& name,
                                     const data::Skeleton& skeleton) {
  if (name == "lower-upper") return lower_upper(skeleton);
  if (name == "five-part") return five_part(skeleton);
  if (name == "whole-body") return whole_body(skeleton);
  throw ConfigError("partition: unknown partition '" + name + "'");
}

GcnLayer::GcnLayer(int nodes, int in_features, int out_features,
                   const std::string& name)
    : adjacency(Tensor(nodes, nodes), name + ".A"),
      weights(Tensor(in_features, out_features), name + ".W") {}

diff::Var gc_layer(diff::Tape& t, diff::Var features, GcnLayer& layer,
                   bool activate) {
  diff::Var mixed = diff::matmul(
      diff::matmul(t.leaf(layer.adjacency), features), t.leaf(layer.weights));
  return activate ? diff::tanh(mixed) : mixed;
}

PartGenerator::PartGenerator(int part_index_, int nodes_, int part_nodes_,
                             int M_, int hidden_, int latent_)
    : part_index(part_index_),
      nodes(nodes_),
      part_nodes(part_nodes_),
      in_features(2 * M_ + latent_),
      hidden(hidden_),
      latent(latent_),
      M(M_),
      input(nodes_, in_features, hidden_,
            "gen" + std::to_string(part_index_) + ".input"),
      output(nodes_, hidden_, M_,
             "gen" + std::to_string(part_index_) + ".output") {
  blocks.reserve(kResidualBlocks);
  for (int b = 0; b < kResidualBlocks; ++b) {
    const std::string base =
        "gen" + std::to_string(part_index_) + ".block" + std::to_string(b);
    blocks.push_back(
        {GcnLayer(nodes_, hidden_, hidden_, base + ".0"),
         GcnLayer(nodes_, hidden_, hidden_, base + ".1")});
  }
}

std::vector<diff::Parameter*> PartGenerator::parameters() {
  std::vector<diff::Parameter*> out = {&input.adjacency, &input.weights};
  for (auto& block : blocks)
    for (GcnLayer& layer : block) {
      out.push_back(&layer.adjacency);
      out.push_back(&layer.weights);
    }
  out.push_back(&output.adjacency);
  out.push_back(&output.weights);
  return out;
}

diff::Var part_residual(diff::Tape& t, PartGenerator& gen, diff::Var cond_coeffs,
                        diff::Var prev_coeffs, const Tensor& z) {
  if (cond_coeffs.rows() != gen.nodes || cond_coeffs.cols() != gen.M)
    throw DimensionError("part_residual: conditioning coefficients must be " +
                         std::to_string(gen.nodes) + "x" +
                         std::to_string(gen.M));
  if (prev_coeffs.rows() != gen.nodes || prev_coeffs.cols() != gen.M)
    throw DimensionError("part_residual: previous-part coefficients must be " +
                         std::to_string(gen.nodes) + "x" +
                         std::to_string(gen.M));
  if (z.rows() != 1 || z.cols() != gen.latent)
    throw DimensionError("part_residual: latent must be 1x" +
                         std::to_string(gen.latent));

  Tensor z_tiled(gen.nodes, gen.latent);
  for (int i = 0; i < gen.nodes; ++i)
    for (int j = 0; j < gen.latent; ++j) z_tiled(i, j) = z(0, j);

  const diff::Var features[] = {cond_coeffs, prev_coeffs,
                                t.constant(std::move(z_tiled))};
  diff::Var x = gc_layer(t, diff::concat_cols(features), gen.input, true);
  for (auto& block : gen.blocks) {
    diff::Var y = gc_layer(t, x, block[0], true);
    y = gc_layer(t, y, block[1], true);
    x = diff::add(x, y);
  }
  diff::Var res = gc_layer(t, x, gen.output, false);
  return diff::rows(res, gen.nodes - gen.part_nodes, gen.nodes);
}

GeneratorStack GeneratorStack::init(const data::Skeleton& skeleton,
                                    PartitionSpec partition, int H, int T,
                                    int M, int hidden, int latent,
                                    std::uint64_t seed) {
  partition.validate(skeleton);
  if (hidden < 1 || latent < 1)
    throw ConfigError("generator: hidden and latent must be >= 1");
  GeneratorStack stack;
  stack.skeleton = skeleton;
  stack.partition = std::move(partition);
  stack.basis = dct::build_basis(H, T, M);
  stack.hidden = hidden;
  stack.latent = latent;
  stack.node_to_coord =
      stack.partition.node_to_coord_permutation(skeleton.coords());

  std::mt19937_64 eng = rng::engine(rng::derive(seed, 0x67636e69));
  std::normal_distribution<double> normal(0.0, 1.0);
  auto init_layer = [&](GcnLayer& layer, bool zero_weights) {
    Tensor& a = layer.adjacency.value();
    // Near-diagonal start: per-node processing before connectivity is learned.
    for (int i = 0; i < a.rows(); ++i)
      for (int j = 0; j < a.cols(); ++j)
        a(i, j) = (i == j ? 1.0 : 0.0) + 0.05 * normal(eng);
    Tensor& w = layer.weights.value();
    if (zero_weights) return;
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.rows()));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (double& x : w.values()) x = uni(eng);
  };

  for (int i = 0; i < stack.partition.count(); ++i) {
    stack.parts.emplace_back(i, stack.partition.coords_upto(i),
                             stack.partition.part_coords(i), M, hidden,
                             latent);
    PartGenerator& gen = stack.parts.back();
    init_layer(gen.input, false);
    for (auto& block : gen.blocks)
      for (GcnLayer& layer : block) init_layer(layer, false);
    init_layer(gen.output, true);  // zero output: identity start

    Tensor pin(stack.partition.part_coords(i), M, 1.0);
    int row = 0;
    for (int j : stack.partition.parts[i]) {
      if (j == 0)
        for (int k = 0; k < 3; ++k)
          for (int c = 0; c < M; ++c) pin(row + k, c) = 0.0;
      row += 3;
    }
    stack.root_pin.push_back(std::move(pin));
  }
  return stack;
}

std::vector<diff::Parameter*> GeneratorStack::parameters() {
  std::vector<diff::Parameter*> out;
  for (PartGenerator& gen : parts) {
    auto ps = gen.parameters();
    out.insert(out.end(), ps.begin(), ps.end());
  }
  return out;
}

Tensor GeneratorStack::gather_node_rows(const Tensor& coord_rows,
                                        int upto_part) const {
  const std::vector<int> order = partition.node_coords(upto_part);
  Tensor out(static_cast<int>(order.size()), coord_rows.cols());
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < out.cols(); ++c) out(r, c) = coord_rows(order[r], c);
  return out;
}

void save_generator(const std::string& path, const GeneratorStack& stack) {
  nlohmann::json j;
  j["format"] = "motion-generator";
  j["version"] = 1;
  j["skeleton"] = stack.skeleton.fingerprint();
  j["H"] = stack.basis.H;
  j["T"] = stack.basis.T;
  j["M"] = stack.basis.M;
  j["hidden"] = stack.hidden;
  j["latent"] = stack.latent;
  nlohmann::json partition;
  partition["names"] = stack.partition.names;
  partition["parts"] = stack.partition.parts;
  j["partition"] = std::move(partition);
  nlohmann::json parts = nlohmann::json::array();
  for (const PartGenerator& gen : stack.parts) {
    nlohmann::json layers = nlohmann::json::array();
    auto dump = [&](const GcnLayer& layer) {
      nlohmann::json l;
      l["A"] = tensor_to_json(layer.adjacency.value());
      l["W"] = tensor_to_json(layer.weights.value());
      layers.push_back(std::move(l));
    };
    dump(gen.input);
    for (const auto& block : gen.blocks)
      for (const GcnLayer& layer : block) dump(layer);
    dump(gen.output);
    nlohmann::json p;
    p["layers"] = std::move(layers);
    parts.push_back(std::move(p));
  }
  j["parts"] = std::move(parts);
  save_json_file(path, j);
}

GeneratorStack load_generator(const std::string& path,
                              const data::Skeleton& skeleton) {
  nlohmann::json j = load_json_file(path);
  if (j.value("format", "") != "motion-generator")
    throw ParseError(path + ": not a generator checkpoint");
  if (j.value("version", 0) != 1)
    throw ParseError(path + ": unsupported checkpoint version");
  if (j.at("skeleton").get<std::string>() != skeleton.fingerprint())
    throw ConfigError(path + ": checkpoint was trained for a different skeleton");

  PartitionSpec partition;
  partition.names = j.at("partition").at("names").get<std::vector<std::string>>();
  partition.parts =
      j.at("partition").at("parts").get<std::vector<std::vector<int>>>();

  GeneratorStack stack = GeneratorStack::init(
      skeleton, std::move(partition), j.at("H").get<int>(),
      j.at("T").get<int>(), j.at("M").get<int>(), j.at("hidden").get<int>(),
      j.at("latent").get<int>(), 0);

  const auto& parts = j.at("parts");
  if (parts.size() != stack.parts.size())
    throw ParseError(path + ": part count mismatch");
  for (std::size_t p = 0; p < stack.parts.size(); ++p) {
    PartGenerator& gen = stack.parts[p];
    std::vector<GcnLayer*> layers = {&gen.input};
    for (auto& block : gen.blocks)
      for (GcnLayer& layer : block) layers.push_back(&layer);
    layers.push_back(&gen.output);
    const auto& src = parts[p].at("layers");
    if (src.size() != layers.size())
      throw ParseError(path + ": layer count mismatch in part " +
                       std::to_string(p));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      Tensor a = tensor_from_json(src[l].at("A"));
      Tensor w = tensor_from_json(src[l].at("W"));
      if (!a.same_shape(layers[l]->adjacency.value()) ||
          !w.same_shape(layers[l]->weights.value()))
        throw ParseError(path + ": layer shape mismatch in part " +
                         std::to_string(p));
      layers[l]->adjacency.value() = std::move(a);
      layers[l]->weights.value() = std::move(w);
    }
  }
  return stack;
}

}  // namespace motion::gen
