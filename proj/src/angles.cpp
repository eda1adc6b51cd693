#include "motion/angles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "motion/errors.hpp"
#include "motion/serialize.hpp"

namespace motion::kin {

namespace {

constexpr double kDegenerate = 1e-8;
constexpr double kCosEps = 1e-7;

void unit_vector(const Tensor& pose, const VecSpec& spec, double* out,
                 const char* angle_name) {
  double v[3];
  if (spec.kind == VecSpec::Kind::kLimb) {
    for (int k = 0; k < 3; ++k)
      v[k] = pose(0, 3 * spec.j1 + k) - pose(0, 3 * spec.j0 + k);
  } else {
    double e1[3], e2[3];
    for (int k = 0; k < 3; ++k) {
      e1[k] = pose(0, 3 * spec.j1 + k) - pose(0, 3 * spec.j0 + k);
      e2[k] = pose(0, 3 * spec.j2 + k) - pose(0, 3 * spec.j0 + k);
    }
    v[0] = e1[1] * e2[2] - e1[2] * e2[1];
    v[1] = e1[2] * e2[0] - e1[0] * e2[2];
    v[2] = e1[0] * e2[1] - e1[1] * e2[0];
  }
  const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (norm <= kDegenerate)
    throw DataError(std::string("angle '") + angle_name + "': degenerate " +
                    (spec.kind == VecSpec::Kind::kLimb ? "limb" : "plane"));
  for (int k = 0; k < 3; ++k) out[k] = v[k] / norm;
}

int need_joint(const data::Skeleton& skeleton, const std::string& name,
               bool& ok) {
  const int idx = skeleton.joint_index(name);
  if (idx < 0) ok = false;
  return idx;
}

}  // namespace

double compute_angle(const Tensor& pose, const AngleSpec& spec) {
  double ua[3], ub[3];
  unit_vector(pose, spec.a, ua, spec.name.c_str());
  unit_vector(pose, spec.b, ub, spec.name.c_str());
  const double dot =
      std::clamp(ua[0] * ub[0] + ua[1] * ub[1] + ua[2] * ub[2], -1.0, 1.0);
  return std::acos(dot);
}

std::vector<AngleSpec> default_angle_specs(const data::Skeleton& skeleton) {
  struct Def {
    const char* name;
    VecSpec::Kind kind_a;
    const char* a0;
    const char* a1;
    const char* a2;
    VecSpec::Kind kind_b;
    const char* b0;
    const char* b1;
    const char* b2;
  };
  constexpr auto L = VecSpec::Kind::kLimb;
  constexpr auto P = VecSpec::Kind::kPlane;
  static const Def defs[] = {
      {"Neck2Spine", L, "neck", "head", nullptr, L, "spine", "neck", nullptr},
      {"HeadPlane2TorsoPlane", P, "neck", "head", "lshoulder", P, "lshoulder",
       "rshoulder", "pelvis"},
      {"Leg2ThighPlane", L, "lknee", "lankle", nullptr, P, "lhip", "lknee",
       "rhip"},
      {"Thigh2TorsoPlane", L, "lhip", "lknee", nullptr, P, "lshoulder",
       "rshoulder", "pelvis"},
      {"UpperSpine2LowerSpine", L, "spine", "neck", nullptr, L, "spine",
       "pelvis", nullptr},
      {"Shoulder2Hip", L, "neck", "lshoulder", nullptr, L, "pelvis", "lhip",
       nullptr},
      {"Shoulder2Neck", L, "neck", "lshoulder", nullptr, L, "neck", "head",
       nullptr},
      {"Shoulder2Shoulder", L, "neck", "lshoulder", nullptr, L, "neck",
       "rshoulder", nullptr},
      {"Spine2Hip", L, "pelvis", "spine", nullptr, L, "pelvis", "lhip",
       nullptr},
      {"Arm2ShoulderPlane", L, "lshoulder", "lelbow", nullptr, P, "neck",
       "lshoulder", "rshoulder"},
  };

  std::vector<AngleSpec> specs;
  for (const Def& d : defs) {
    bool ok = true;
    AngleSpec s;
    s.name = d.name;
    s.a.kind = d.kind_a;
    s.a.j0 = need_joint(skeleton, d.a0, ok);
    s.a.j1 = need_joint(skeleton, d.a1, ok);
    if (d.kind_a == P) s.a.j2 = need_joint(skeleton, d.a2, ok);
    s.b.kind = d.kind_b;
    s.b.j0 = need_joint(skeleton, d.b0, ok);
    s.b.j1 = need_joint(skeleton, d.b1, ok);
    if (d.kind_b == P) s.b.j2 = need_joint(skeleton, d.b2, ok);
    if (ok) specs.push_back(std::move(s));  // undefined for this skeleton
  }
  return specs;
}

AngleTable mine_ranges(const Tensor& frames, const data::Skeleton& skeleton,
                       std::vector<AngleSpec> specs,
                       std::vector<int>* skipped) {
  if (frames.rows() < 1) throw ContractError("mine_ranges: empty dataset");
  if (frames.cols() != skeleton.coords())
    throw DimensionError("mine_ranges: coordinate count mismatch");
  AngleTable table;
  table.skeleton_fingerprint = skeleton.fingerprint();
  if (skipped) skipped->assign(specs.size(), 0);
  for (std::size_t s = 0; s < specs.size(); ++s) {
    AngleSpec& spec = specs[s];
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    int valid = 0;
    for (int f = 0; f < frames.rows(); ++f) {
      double a;
      try {
        a = compute_angle(take_rows(frames, f, f + 1), spec);
      } catch (const DataError&) {
        if (skipped) ++(*skipped)[s];
        continue;
      }
      lo = std::min(lo, a);
      hi = std::max(hi, a);
      ++valid;
    }
    if (valid == 0)
      throw DataError("mine_ranges: every frame degenerate for angle '" +
                      spec.name + "'");
    spec.lower = lo;
    spec.upper = hi;
    spec.mined = true;
  }
  table.specs = std::move(specs);
  return table;
}

double angle_loss(const Tensor& pose, const AngleTable& table) {
  double loss = 0.0;
  for (const AngleSpec& spec : table.specs) {
    if (!spec.mined)
      throw ContractError("angle_loss: unmined spec '" + spec.name + "'");
    const double a = compute_angle(pose, spec);
    if (a < spec.lower) {
      const double d = a - spec.lower;
      loss += d * d;
    } else if (a > spec.upper) {
      const double d = a - spec.upper;
      loss += d * d;
    }
  }
  return loss;
}

namespace {

diff::Var unit_vector_rows(diff::Tape& t, diff::Var frames,
                           const VecSpec& spec) {
  auto joint = [&](int j) {
    return diff::cols(frames, 3 * j, 3 * j + 3);
  };
  diff::Var v = spec.kind == VecSpec::Kind::kLimb
                    ? diff::sub(joint(spec.j1), joint(spec.j0))
                    : diff::cross3_rows(
                          diff::sub(joint(spec.j1), joint(spec.j0)),
                          diff::sub(joint(spec.j2), joint(spec.j0)));
  (void)t;
  return diff::normalize3_rows(v, kDegenerate);
}

}  // namespace

diff::Var angle_loss_mean(diff::Tape& t, diff::Var frames,
                          const AngleTable& table) {
  const int frame_count = frames.rows();
  diff::Var total;
  bool have = false;
  for (const AngleSpec& spec : table.specs) {
    if (!spec.mined)
      throw ContractError("angle_loss: unmined spec '" + spec.name + "'");
    diff::Var ua = unit_vector_rows(t, frames, spec.a);
    diff::Var ub = unit_vector_rows(t, frames, spec.b);
    diff::Var cosine =
        diff::clamp(diff::rowsum(diff::mul(ua, ub)), -1.0 + kCosEps,
                    1.0 - kCosEps);
    diff::Var ang = diff::acos(cosine);
    const double inf = std::numeric_limits<double>::infinity();
    diff::Var below =
        diff::clamp(diff::add_scalar(ang, -spec.lower), -inf, 0.0);
    diff::Var above =
        diff::clamp(diff::add_scalar(ang, -spec.upper), 0.0, inf);
    diff::Var viol =
        diff::sum(diff::add(diff::square(below), diff::square(above)));
    total = have ? diff::add(total, viol) : viol;
    have = true;
  }
  if (!have) return t.constant_scalar(0.0);
  return diff::scale(total, 1.0 / frame_count);
}

namespace {

nlohmann::json vec_to_json(const VecSpec& v, const data::Skeleton& skeleton) {
  nlohmann::json j;
  j["kind"] = v.kind == VecSpec::Kind::kLimb ? "limb" : "plane";
  nlohmann::json joints = nlohmann::json::array();
  joints.push_back(skeleton.joint_names[v.j0]);
  joints.push_back(skeleton.joint_names[v.j1]);
  if (v.kind == VecSpec::Kind::kPlane)
    joints.push_back(skeleton.joint_names[v.j2]);
  j["joints"] = std::move(joints);
  return j;
}

VecSpec vec_from_json(const nlohmann::json& j, const data::Skeleton& skeleton,
                      const std::string& path) {
  VecSpec v;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "limb")
    v.kind = VecSpec::Kind::kLimb;
  else if (kind == "plane")
    v.kind = VecSpec::Kind::kPlane;
  else
    throw ParseError(path + ": unknown vector kind '" + kind + "'");
  const auto& joints = j.at("joints");
  const std::size_t expect = v.kind == VecSpec::Kind::kLimb ? 2 : 3;
  if (joints.size() != expect)
    throw ParseError(path + ": expected " + std::to_string(expect) +
                     " joints");
  auto resolve = [&](const std::string& name) {
    const int idx = skeleton.joint_index(name);
    if (idx < 0)
      throw ConfigError(path + ": unknown joint '" + name + "'");
    return idx;
  };
  v.j0 = resolve(joints[0].get<std::string>());
  v.j1 = resolve(joints[1].get<std::string>());
  if (v.kind == VecSpec::Kind::kPlane) v.j2 = resolve(joints[2].get<std::string>());
  return v;
}

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

}  // namespace

void save_angle_table(const std::string& path, const AngleTable& table,
                      const data::Skeleton& skeleton) {
  nlohmann::json j;
  j["format"] = "motion-angles";
  j["version"] = 1;
  j["skeleton"] = table.skeleton_fingerprint;
  nlohmann::json specs = nlohmann::json::array();
  for (const AngleSpec& s : table.specs) {
    nlohmann::json js;
    js["name"] = s.name;
    js["a"] = vec_to_json(s.a, skeleton);
    js["b"] = vec_to_json(s.b, skeleton);
    js["lower_deg"] = s.lower * kRadToDeg;
    js["upper_deg"] = s.upper * kRadToDeg;
    specs.push_back(std::move(js));
  }
  j["specs"] = std::move(specs);
  save_json_file(path, j);
}

AngleTable load_angle_table(const std::string& path,
                            const data::Skeleton& skeleton) {
  nlohmann::json j = load_json_file(path);
  if (j.value("format", "") != "motion-angles")
    throw ParseError(path + ": not an angle table");
  if (j.value("version", 0) != 1)
    throw ParseError(path + ": unsupported angle table version");
  AngleTable table;
  table.skeleton_fingerprint = j.at("skeleton").get<std::string>();
  if (table.skeleton_fingerprint != skeleton.fingerprint())
    throw ConfigError(path + ": angle table was mined for a different skeleton");
  for (const auto& js : j.at("specs")) {
    AngleSpec s;
    s.name = js.at("name").get<std::string>();
    s.a = vec_from_json(js.at("a"), skeleton, path);
    s.b = vec_from_json(js.at("b"), skeleton, path);
    s.lower = js.at("lower_deg").get<double>() / kRadToDeg;
    s.upper = js.at("upper_deg").get<double>() / kRadToDeg;
    if (s.lower > s.upper)
      throw ParseError(path + ": lower bound above upper for '" + s.name + "'");
    s.mined = true;
    table.specs.push_back(std::move(s));
  }
  return table;
}

}  // namespace motion::kin
