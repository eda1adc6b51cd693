#include "motion/skeleton.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <sstream>

#include "motion/errors.hpp"

namespace motion::data {

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

int Skeleton::joint_index(const std::string& name) const {
  for (int i = 0; i < joints(); ++i)
    if (joint_names[i] == name) return i;
  return -1;
}

std::string Skeleton::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int i = 0; i < joints(); ++i) {
    h = fnv1a(joint_names[i], h);
    h = fnv1a(std::to_string(parents[i]), h);
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

void Skeleton::validate() const {
  if (joints() < 1) throw DataError("skeleton: no joints");
  if (joint_names.size() != parents.size())
    throw DataError("skeleton: name/parent count mismatch");
  int roots = 0;
  for (int i = 0; i < joints(); ++i) {
    if (parents[i] == -1) {
      ++roots;
    } else if (parents[i] < 0 || parents[i] >= joints()) {
      throw DataError("skeleton: parent index out of range for joint " +
                      std::to_string(i));
    } else if (parents[i] >= i) {
      throw DataError("skeleton: joint " + std::to_string(i) +
                      " precedes its parent");
    }
  }
  if (roots != 1)
    throw DataError("skeleton: expected exactly one root, found " +
                    std::to_string(roots));
  if (parents[0] != -1) throw DataError("skeleton: joint 0 must be the root");
}

Tensor root_center(const Tensor& frames, const Skeleton& skeleton) {
  if (frames.cols() != skeleton.coords())
    throw DimensionError("root_center: " + std::to_string(frames.cols()) +
                         " coordinates for a " +
                         std::to_string(skeleton.joints()) +
                         "-joint skeleton");
  Tensor out = frames;
  for (int f = 0; f < frames.rows(); ++f) {
    const double rx = frames(f, 0), ry = frames(f, 1), rz = frames(f, 2);
    for (int j = 0; j < skeleton.joints(); ++j) {
      out(f, 3 * j + 0) -= rx;
      out(f, 3 * j + 1) -= ry;
      out(f, 3 * j + 2) -= rz;
    }
  }
  return out;
}

Tensor limb_lengths_frames(const Tensor& frames, const Skeleton& skeleton) {
  if (frames.cols() != skeleton.coords())
    throw DimensionError("limb_lengths: " + std::to_string(frames.cols()) +
                         " coordinates for a " +
                         std::to_string(skeleton.joints()) +
                         "-joint skeleton");
  Tensor out(frames.rows(), skeleton.limbs());
  for (int f = 0; f < frames.rows(); ++f)
    for (int l = 0; l < skeleton.limbs(); ++l) {
      const int j = skeleton.limb_joint(l);
      const int p = skeleton.parents[j];
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double d = frames(f, 3 * j + k) - frames(f, 3 * p + k);
        acc += d * d;
      }
      out(f, l) = std::sqrt(acc);
    }
  return out;
}

Tensor limb_lengths(const Tensor& pose, const Skeleton& skeleton) {
  if (pose.rows() != 1)
    throw DimensionError("limb_lengths: expected a single pose row");
  return limb_lengths_frames(pose, skeleton);
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line,
                             const std::string& what) {
  throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

// Reorder joints so every parent precedes its children (breadth-first from
// the root). Returns the identity when the order is already topological.
std::vector<int> topological_order(const std::vector<int>& parents,
                                   const std::string& path) {
  const int n = static_cast<int>(parents.size());
  int root = -1, roots = 0;
  for (int i = 0; i < n; ++i) {
    if (parents[i] == -1) {
      root = i;
      ++roots;
    } else if (parents[i] < 0 || parents[i] >= n) {
      parse_fail(path, 3, "parent index out of range for joint " +
                              std::to_string(i));
    }
  }
  if (roots != 1)
    parse_fail(path, 3,
               "expected exactly one root (-1), found " +
                   std::to_string(roots));

  bool sorted = root == 0;
  for (int i = 1; i < n && sorted; ++i) sorted = parents[i] < i;
  if (sorted) {
    std::vector<int> id(n);
    for (int i = 0; i < n; ++i) id[i] = i;
    return id;
  }

  std::vector<std::vector<int>> children(n);
  for (int i = 0; i < n; ++i)
    if (parents[i] >= 0) children[parents[i]].push_back(i);
  std::vector<int> order;
  order.reserve(n);
  std::deque<int> queue{root};
  while (!queue.empty()) {
    const int j = queue.front();
    queue.pop_front();
    order.push_back(j);
    for (int c : children[j]) queue.push_back(c);
  }
  if (static_cast<int>(order.size()) != n)
    parse_fail(path, 3, "parents do not form a tree (cycle or disconnected)");
  return order;
}

}  // namespace

MotionFile load_motion_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) parse_fail(path, 1, "empty file");
  int joints = 0;
  double fps = 0.0;
  char unit[8] = {0};
  if (std::sscanf(line.c_str(), "MOTION v1 joints=%d fps=%lf unit=%7s",
                  &joints, &fps, unit) != 3)
    parse_fail(path, 1, "bad header: " + line);
  if (joints < 1) parse_fail(path, 1, "joint count must be >= 1");
  if (fps <= 0.0) parse_fail(path, 1, "fps must be positive");
  const std::string unit_s = unit;
  if (unit_s != "m" && unit_s != "mm")
    parse_fail(path, 1, "unknown unit '" + unit_s + "'");
  const double to_meters = unit_s == "mm" ? 1e-3 : 1.0;

  if (!std::getline(in, line)) parse_fail(path, 2, "missing joint names");
  std::vector<std::string> names;
  {
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) names.push_back(tok);
  }
  if (static_cast<int>(names.size()) != joints)
    parse_fail(path, 2, "expected " + std::to_string(joints) + " names, got " +
                            std::to_string(names.size()));

  if (!std::getline(in, line)) parse_fail(path, 3, "missing parent indices");
  std::vector<int> parents;
  {
    std::istringstream ss(line);
    int p = 0;
    while (ss >> p) parents.push_back(p);
  }
  if (static_cast<int>(parents.size()) != joints)
    parse_fail(path, 3, "expected " + std::to_string(joints) +
                            " parent indices, got " +
                            std::to_string(parents.size()));

  const std::vector<int> order = topological_order(parents, path);
  std::vector<int> new_index(joints);
  for (int k = 0; k < joints; ++k) new_index[order[k]] = k;

  Skeleton skeleton;
  skeleton.joint_names.resize(joints);
  skeleton.parents.resize(joints);
  for (int k = 0; k < joints; ++k) {
    const int src = order[k];
    skeleton.joint_names[k] = names[src];
    skeleton.parents[k] = parents[src] == -1 ? -1 : new_index[parents[src]];
  }
  skeleton.validate();

  std::vector<double> values;
  int frame_lines = 0;
  int line_no = 3;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    int count = 0;
    double v = 0.0;
    while (ss >> v) {
      values.push_back(v);
      ++count;
    }
    if (!ss.eof())
      parse_fail(path, line_no, "malformed number in frame line");
    if (count != 3 * joints)
      parse_fail(path, line_no, "expected " + std::to_string(3 * joints) +
                                    " coordinates, got " +
                                    std::to_string(count));
    ++frame_lines;
  }
  if (frame_lines < 1) parse_fail(path, line_no + 1, "no frames");

  Tensor frames(frame_lines, 3 * joints);
  for (int f = 0; f < frame_lines; ++f)
    for (int k = 0; k < joints; ++k) {
      const int src = order[k];
      for (int c = 0; c < 3; ++c)
        frames(f, 3 * k + c) =
            values[static_cast<std::size_t>(f) * 3 * joints + 3 * src + c] *
            to_meters;
    }

  MotionFile file;
  file.skeleton = std::move(skeleton);
  file.sequence.fps = fps;
  file.sequence.frames = root_center(frames, file.skeleton);
  return file;
}

void save_motion_file(const std::string& path, const Skeleton& skeleton,
                      const MotionSequence& sequence) {
  skeleton.validate();
  if (sequence.frames.cols() != skeleton.coords())
    throw DimensionError("save_motion_file: coordinate count mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "MOTION v1 joints=%d fps=%.9g unit=m\n",
                skeleton.joints(), sequence.fps);
  out << buf;
  for (int j = 0; j < skeleton.joints(); ++j)
    out << skeleton.joint_names[j] << (j + 1 == skeleton.joints() ? "\n" : " ");
  for (int j = 0; j < skeleton.joints(); ++j)
    out << skeleton.parents[j] << (j + 1 == skeleton.joints() ? "\n" : " ");
  for (int f = 0; f < sequence.frames.rows(); ++f) {
    for (int c = 0; c < sequence.frames.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", sequence.frames(f, c));
      out << buf << (c + 1 == sequence.frames.cols() ? "\n" : " ");
    }
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace motion::data
