#include "motion/tape.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <utility>

#include "motion/errors.hpp"
#include "motion/kernels.hpp"

namespace motion::diff {

namespace {

std::atomic<std::uint64_t> g_next_param_id{1};

std::string shp(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shapes " + shp(a) + " vs " +
                         shp(b));
}

Tensor mm_nn(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  kernels::matmul_nn(a.rows(), a.cols(), b.cols(), a.data(), b.data(),
                     c.data());
  return c;
}

Tensor mm_nt(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.rows());
  kernels::matmul_nt(a.rows(), a.cols(), b.rows(), a.data(), b.data(),
                     c.data());
  return c;
}

Tensor mm_tn(const Tensor& a, const Tensor& b) {
  Tensor c(a.cols(), b.cols());
  kernels::matmul_tn(a.cols(), a.rows(), b.cols(), a.data(), b.data(),
                     c.data());
  return c;
}

Tensor& grad_slot(std::vector<Tensor>& grads, int idx, const Tensor& like) {
  Tensor& g = grads[idx];
  if (g.empty()) g = Tensor(like.rows(), like.cols());
  return g;
}

}  // namespace

Parameter::Parameter(Tensor value, std::string name)
    : value_(std::move(value)),
      grad_(value_.rows(), value_.cols()),
      name_(std::move(name)),
      id_(g_next_param_id.fetch_add(1)) {}

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("var: value() on an empty handle");
  return tape_->value_of(id_);
}

struct OpAccess {
  static Var push(Tape& t, Tensor v, Tape::BackFn b, const char* op) {
    return t.push(std::move(v), std::move(b), op);
  }
  static const Tensor& val(const Tape& t, int id) { return t.value_of(id); }
  static int id(Var v) { return v.id_; }
  static Tape* tape(Var v) { return v.tape_; }
  static int next_id(const Tape& t) {
    return static_cast<int>(t.node_count());
  }
};

namespace {

Tape& tape_of(const char* op, Var a) {
  Tape* t = OpAccess::tape(a);
  if (!t) throw ContractError(std::string(op) + ": empty var");
  return *t;
}

Tape& tape_of(const char* op, Var a, Var b) {
  Tape& t = tape_of(op, a);
  if (OpAccess::tape(b) != &t)
    throw ContractError(std::string(op) + ": operands on different tapes");
  return t;
}

}  // namespace

Var Tape::constant(Tensor v) { return push(std::move(v), nullptr, "constant"); }

Var Tape::leaf(Parameter& p) {
  Var v = push(p.value(), nullptr, "leaf");
  nodes_[v.id_].param = &p;
  return v;
}

Var Tape::push(Tensor value, BackFn back, const char* op) {
  if (!value.all_finite())
    throw DomainError(std::string(op) + ": non-finite output");
  nodes_.push_back(Node{std::move(value), std::move(back), nullptr});
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::run_backward(Var root, std::vector<Tensor>& grads) const {
  if (OpAccess::tape(root) != this)
    throw ContractError("backward: root is not on this tape");
  const Tensor& rv = nodes_[root.id_].value;
  if (!rv.is_scalar())
    throw ContractError("backward: root must be scalar, got " + shp(rv));
  grads.assign(nodes_.size(), Tensor());
  grads[root.id_] = Tensor::scalar(1.0);
  for (int i = root.id_; i >= 0; --i) {
    const Node& n = nodes_[i];
    if (grads[i].empty() || !n.back) continue;
    n.back(grads[i], *this, grads);
  }
}

void Tape::backward(Var root) {
  std::vector<Tensor> grads;
  run_backward(root, grads);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].param && !grads[i].empty())
      nodes_[i].param->grad() += grads[i];
  }
}

GradTable Tape::gradients(Var root) const {
  std::vector<Tensor> grads;
  run_backward(root, grads);
  GradTable table;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].param || grads[i].empty()) continue;
    auto [it, inserted] = table.try_emplace(nodes_[i].param, grads[i]);
    if (!inserted) it->second += grads[i];
  }
  return table;
}

// ---- op implementations -------------------------------------------------

Var matmul(Var a, Var b) {
  Tape& t = tape_of("matmul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows())
    throw DimensionError("matmul: shapes " + shp(av) + " * " + shp(bv));
  const int pa = OpAccess::id(a), pb = OpAccess::id(b);
  return OpAccess::push(
      t, mm_nn(av, bv),
      [pa, pb](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        const Tensor& A = OpAccess::val(tp, pa);
        const Tensor& B = OpAccess::val(tp, pb);
        grad_slot(gs, pa, A) += mm_nt(g, B);
        grad_slot(gs, pb, B) += mm_tn(A, g);
      },
      "matmul");
}

Var add(Var a, Var b) {
  Tape& t = tape_of("add", a, b);
  require_same_shape("add", a.value(), b.value());
  const int pa = OpAccess::id(a), pb = OpAccess::id(b);
  return OpAccess::push(
      t, a.value() + b.value(),
      [pa, pb](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        grad_slot(gs, pa, OpAccess::val(tp, pa)) += g;
        grad_slot(gs, pb, OpAccess::val(tp, pb)) += g;
      },
      "add");
}

Var sub(Var a, Var b) {
  Tape& t = tape_of("sub", a, b);
  require_same_shape("sub", a.value(), b.value());
  const int pa = OpAccess::id(a), pb = OpAccess::id(b);
  return OpAccess::push(
      t, a.value() - b.value(),
      [pa, pb](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        grad_slot(gs, pa, OpAccess::val(tp, pa)) += g;
        grad_slot(gs, pb, OpAccess::val(tp, pb)) -= g;
      },
      "sub");
}

Var mul(Var a, Var b) {
  Tape& t = tape_of("mul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape("mul", av, bv);
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = av.data()[i] * bv.data()[i];
  const int pa = OpAccess::id(a), pb = OpAccess::id(b);
  return OpAccess::push(
      t, std::move(out),
      [pa, pb](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        const Tensor& A = OpAccess::val(tp, pa);
        const Tensor& B = OpAccess::val(tp, pb);
        Tensor& ga = grad_slot(gs, pa, A);
        Tensor& gb = grad_slot(gs, pb, B);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.data()[i] += g.data()[i] * B.data()[i];
          gb.data()[i] += g.data()[i] * A.data()[i];
        }
      },
      "mul");
}

Var add_scalar(Var a, double c) {
  Tape& t = tape_of("add_scalar", a);
  Tensor out = a.value();
  for (double& x : out.values()) x += c;
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, std::move(out),
      [pa](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        grad_slot(gs, pa, OpAccess::val(tp, pa)) += g;
      },
      "add_scalar");
}

Var scale(Var a, double s) {
  Tape& t = tape_of("scale", a);
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, a.value() * s,
      [pa, s](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        Tensor& ga = grad_slot(gs, pa, OpAccess::val(tp, pa));
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data()[i] += s * g.data()[i];
      },
      "scale");
}

Var scale(Var a, Var s) {
  Tape& t = tape_of("scale", a, s);
  if (!s.value().is_scalar())
    throw DimensionError("scale: scale factor must be 1x1, got " +
                         shp(s.value()));
  const double sv = s.value().scalar_value();
  const int pa = OpAccess::id(a), ps = OpAccess::id(s);
  return OpAccess::push(
      t, a.value() * sv,
      [pa, ps, sv](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        const Tensor& A = OpAccess::val(tp, pa);
        Tensor& ga = grad_slot(gs, pa, A);
        Tensor& gsl = grad_slot(gs, ps, OpAccess::val(tp, ps));
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga.data()[i] += sv * g.data()[i];
          acc += g.data()[i] * A.data()[i];
        }
        gsl.data()[0] += acc;
      },
      "scale");
}

Var tanh(Var a) {
  Tape& t = tape_of("tanh", a);
  Tensor out = a.value();
  for (double& x : out.values()) x = std::tanh(x);
  const int pa = OpAccess::id(a);
  const int self = OpAccess::next_id(t);
  return OpAccess::push(
      t, std::move(out),
      [pa, self](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        const Tensor& Y = OpAccess::val(tp, self);
        Tensor& ga = grad_slot(gs, pa, OpAccess::val(tp, pa));
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = Y.data()[i];
          ga.data()[i] += g.data()[i] * (1.0 - y * y);
        }
      },
      "tanh");
}

namespace {

Var prelu_impl(Var a, double slope, int slope_id) {
  Tape& t = tape_of("prelu", a);
  Tensor out = a.value();
  for (double& x : out.values()) x = x > 0.0 ? x : slope * x;
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, std::move(out),
      [pa, slope, slope_id](const Tensor& g, const Tape& tp,
                            std::vector<Tensor>& gs) {
        const Tensor& X = OpAccess::val(tp, pa);
        Tensor& ga = grad_slot(gs, pa, X);
        double slope_acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = X.data()[i];
          if (x > 0.0) {
            ga.data()[i] += g.data()[i];
          } else {
            ga.data()[i] += slope * g.data()[i];
            slope_acc += g.data()[i] * x;
          }
        }
        if (slope_id >= 0) {
          Tensor& gsl = grad_slot(gs, slope_id, OpAccess::val(tp, slope_id));
          gsl.data()[0] += slope_acc;
        }
      },
      "prelu");
}

}  // namespace

Var prelu(Var a, double slope) { return prelu_impl(a, slope, -1); }

Var prelu(Var a, Var slope) {
  tape_of("prelu", a, slope);
  if (!slope.value().is_scalar())
    throw DimensionError("prelu: slope must be 1x1, got " +
                         shp(slope.value()));
  return prelu_impl(a, slope.value().scalar_value(), OpAccess::id(slope));
}

Var exp(Var a) {
  Tape& t = tape_of("exp", a);
  Tensor out = a.value();
  for (double& x : out.values()) x = std::exp(x);
  const int pa = OpAccess::id(a);
  const int self = OpAccess::next_id(t);
  return OpAccess::push(
      t, std::move(out),
      [pa, self](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        const Tensor& Y = OpAccess::val(tp, self);
        Tensor& ga = grad_slot(gs, pa, OpAccess::val(tp, pa));
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data()[i] += g.data()[i] * Y.data()[i];
      },
      "exp");
}

Var log(Var a) {
  Tape& t = tape_of("log", a);
  Tensor out = a.value();
  for (double& x : out.values()) {
    if (x <= 0.0) throw DomainError("log: non-positive input");
    x = std::log(x);
  }
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, std::move(out),
      [pa](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        const Tensor& X = OpAccess::val(tp, pa);
        Tensor& ga = grad_slot(gs, pa, X);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data()[i] += g.data()[i] / X.data()[i];
      },
      "log");
}

Var square(Var a) {
  Tape& t = tape_of("square", a);
  Tensor out = a.value();
  for (double& x : out.values()) x = x * x;
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, std::move(out),
      [pa](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        const Tensor& X = OpAccess::val(tp, pa);
        Tensor& ga = grad_slot(gs, pa, X);
        for (std::size_t i = 0; i < g.size(); ++i)
          ga.data()[i] += 2.0 * g.data()[i] * X.data()[i];
      },
      "square");
}

Var acos(Var a) {
  Tape& t = tape_of("acos", a);
  Tensor out = a.value();
  for (double& x : out.values()) {
    if (x < -1.0 || x > 1.0) throw DomainError("acos: input outside [-1, 1]");
    x = std::acos(x);
  }
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, std::move(out),
      [pa](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        const Tensor& X = OpAccess::val(tp, pa);
        Tensor& ga = grad_slot(gs, pa, X);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = X.data()[i];
          ga.data()[i] -= g.data()[i] / std::sqrt(1.0 - x * x);
        }
      },
      "acos");
}

Var clamp(Var a, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  Tape& t = tape_of("clamp", a);
  Tensor out = a.value();
  for (double& x : out.values()) x = x < lo ? lo : (x > hi ? hi : x);
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, std::move(out),
      [pa, lo, hi](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        const Tensor& X = OpAccess::val(tp, pa);
        Tensor& ga = grad_slot(gs, pa, X);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = X.data()[i];
          if (x >= lo && x <= hi) ga.data()[i] += g.data()[i];
        }
      },
      "clamp");
}

Var sum(Var a) {
  Tape& t = tape_of("sum", a);
  double acc = 0.0;
  for (double x : a.value().values()) acc += x;
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, Tensor::scalar(acc),
      [pa](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        Tensor& ga = grad_slot(gs, pa, OpAccess::val(tp, pa));
        const double gv = g.data()[0];
        for (double& x : ga.values()) x += gv;
      },
      "sum");
}

Var mean(Var a) {
  Tape& t = tape_of("mean", a);
  const std::size_t n = a.value().size();
  double acc = 0.0;
  for (double x : a.value().values()) acc += x;
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, Tensor::scalar(acc / static_cast<double>(n)),
      [pa, n](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        Tensor& ga = grad_slot(gs, pa, OpAccess::val(tp, pa));
        const double gv = g.data()[0] / static_cast<double>(n);
        for (double& x : ga.values()) x += gv;
      },
      "mean");
}

Var l1_norm(Var a) {
  Tape& t = tape_of("l1_norm", a);
  double acc = 0.0;
  for (double x : a.value().values()) acc += std::fabs(x);
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, Tensor::scalar(acc),
      [pa](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        const Tensor& X = OpAccess::val(tp, pa);
        Tensor& ga = grad_slot(gs, pa, X);
        const double gv = g.data()[0];
        for (std::size_t i = 0; i < X.size(); ++i) {
          const double x = X.data()[i];
          if (x > 0.0)
            ga.data()[i] += gv;
          else if (x < 0.0)
            ga.data()[i] -= gv;
        }
      },
      "l1_norm");
}

Var l2_norm(Var a) {
  Tape& t = tape_of("l2_norm", a);
  double acc = 0.0;
  for (double x : a.value().values()) acc += x * x;
  const double nrm = std::sqrt(acc);
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, Tensor::scalar(nrm),
      [pa, nrm](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        if (nrm == 0.0) return;  // subgradient 0 at the origin
        const Tensor& X = OpAccess::val(tp, pa);
        Tensor& ga = grad_slot(gs, pa, X);
        const double gv = g.data()[0] / nrm;
        for (std::size_t i = 0; i < X.size(); ++i)
          ga.data()[i] += gv * X.data()[i];
      },
      "l2_norm");
}

Var rowsum(Var a) {
  Tape& t = tape_of("rowsum", a);
  const Tensor& av = a.value();
  Tensor out(av.rows(), 1);
  for (int i = 0; i < av.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < av.cols(); ++j) acc += av(i, j);
    out(i, 0) = acc;
  }
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, std::move(out),
      [pa](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        const Tensor& X = OpAccess::val(tp, pa);
        Tensor& ga = grad_slot(gs, pa, X);
        for (int i = 0; i < X.rows(); ++i)
          for (int j = 0; j < X.cols(); ++j) ga(i, j) += g(i, 0);
      },
      "rowsum");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat: no operands");
  Tape& t = tape_of("concat", parts[0]);
  int total = 0;
  const int cols = parts[0].cols();
  for (Var p : parts) {
    tape_of("concat", parts[0], p);
    if (p.cols() != cols)
      throw DimensionError("concat: column mismatch " + shp(p.value()));
    total += p.rows();
  }
  Tensor out(total, cols);
  std::vector<std::pair<int, int>> spans;  // (parent id, row offset)
  spans.reserve(parts.size());
  int off = 0;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    std::memcpy(out.data() + static_cast<std::size_t>(off) * cols, pv.data(),
                pv.size() * sizeof(double));
    spans.emplace_back(OpAccess::id(p), off);
    off += pv.rows();
  }
  return OpAccess::push(
      t, std::move(out),
      [spans](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        for (auto [pid, row0] : spans) {
          const Tensor& P = OpAccess::val(tp, pid);
          Tensor& gp = grad_slot(gs, pid, P);
          for (int i = 0; i < P.rows(); ++i)
            for (int j = 0; j < P.cols(); ++j) gp(i, j) += g(row0 + i, j);
        }
      },
      "concat");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat: no operands");
  Tape& t = tape_of("concat", parts[0]);
  int total = 0;
  const int rows_n = parts[0].rows();
  for (Var p : parts) {
    tape_of("concat", parts[0], p);
    if (p.rows() != rows_n)
      throw DimensionError("concat: row mismatch " + shp(p.value()));
    total += p.cols();
  }
  Tensor out(rows_n, total);
  std::vector<std::pair<int, int>> spans;  // (parent id, col offset)
  spans.reserve(parts.size());
  int off = 0;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    for (int i = 0; i < rows_n; ++i)
      for (int j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
    spans.emplace_back(OpAccess::id(p), off);
    off += pv.cols();
  }
  return OpAccess::push(
      t, std::move(out),
      [spans](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        for (auto [pid, col0] : spans) {
          const Tensor& P = OpAccess::val(tp, pid);
          Tensor& gp = grad_slot(gs, pid, P);
          for (int i = 0; i < P.rows(); ++i)
            for (int j = 0; j < P.cols(); ++j) gp(i, j) += g(i, col0 + j);
        }
      },
      "concat");
}

Var concat_rows(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_rows(std::span<const Var>(parts));
}

Var concat_cols(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat_cols(std::span<const Var>(parts));
}

Var slice(Var a, int r0, int r1, int c0, int c1) {
  Tape& t = tape_of("slice", a);
  const Tensor& av = a.value();
  if (r0 < 0 || r1 > av.rows() || r0 > r1 || c0 < 0 || c1 > av.cols() ||
      c0 > c1)
    throw DimensionError("slice: [" + std::to_string(r0) + "," +
                         std::to_string(r1) + ")x[" + std::to_string(c0) +
                         "," + std::to_string(c1) + ") of " + shp(av));
  Tensor out(r1 - r0, c1 - c0);
  for (int i = r0; i < r1; ++i)
    for (int j = c0; j < c1; ++j) out(i - r0, j - c0) = av(i, j);
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, std::move(out),
      [pa, r0, c0](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        Tensor& ga = grad_slot(gs, pa, OpAccess::val(tp, pa));
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) ga(r0 + i, c0 + j) += g(i, j);
      },
      "slice");
}

Var rows(Var a, int r0, int r1) { return slice(a, r0, r1, 0, a.cols()); }

Var cols(Var a, int c0, int c1) { return slice(a, 0, a.rows(), c0, c1); }

Var transpose(Var a) {
  Tape& t = tape_of("transpose", a);
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, motion::transpose(a.value()),
      [pa](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        grad_slot(gs, pa, OpAccess::val(tp, pa)) += motion::transpose(g);
      },
      "transpose");
}

Var tile_rows(Var a, int n) {
  Tape& t = tape_of("tile_rows", a);
  const Tensor& av = a.value();
  if (av.rows() != 1)
    throw DimensionError("tile_rows: expected a row vector, got " + shp(av));
  if (n < 1) throw ContractError("tile_rows: n must be >= 1");
  Tensor out(n, av.cols());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < av.cols(); ++j) out(i, j) = av(0, j);
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, std::move(out),
      [pa](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        Tensor& ga = grad_slot(gs, pa, OpAccess::val(tp, pa));
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) ga(0, j) += g(i, j);
      },
      "tile_rows");
}

Var add_rowvec(Var a, Var b) {
  Tape& t = tape_of("add_rowvec", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw DimensionError("add_rowvec: shapes " + shp(av) + " + " + shp(bv));
  Tensor out = av;
  for (int i = 0; i < av.rows(); ++i)
    for (int j = 0; j < av.cols(); ++j) out(i, j) += bv(0, j);
  const int pa = OpAccess::id(a), pb = OpAccess::id(b);
  return OpAccess::push(
      t, std::move(out),
      [pa, pb](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        grad_slot(gs, pa, OpAccess::val(tp, pa)) += g;
        Tensor& gb = grad_slot(gs, pb, OpAccess::val(tp, pb));
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      },
      "add_rowvec");
}

Var diag_embed(Var a) {
  Tape& t = tape_of("diag_embed", a);
  const Tensor& av = a.value();
  if (av.rows() != 1)
    throw DimensionError("diag_embed: expected a row vector, got " + shp(av));
  const int n = av.cols();
  Tensor out(n, n);
  for (int i = 0; i < n; ++i) out(i, i) = av(0, i);
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, std::move(out),
      [pa, n](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        Tensor& ga = grad_slot(gs, pa, OpAccess::val(tp, pa));
        for (int i = 0; i < n; ++i) ga(0, i) += g(i, i);
      },
      "diag_embed");
}

namespace {

inline void cross3(const double* a, const double* b, double* out) {
  out[0] = a[1] * b[2] - a[2] * b[1];
  out[1] = a[2] * b[0] - a[0] * b[2];
  out[2] = a[0] * b[1] - a[1] * b[0];
}

}  // namespace

Var cross3_rows(Var a, Var b) {
  Tape& t = tape_of("cross3_rows", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape("cross3_rows", av, bv);
  if (av.cols() != 3)
    throw DimensionError("cross3_rows: expected nx3, got " + shp(av));
  Tensor out(av.rows(), 3);
  for (int i = 0; i < av.rows(); ++i)
    cross3(av.data() + 3 * i, bv.data() + 3 * i, out.data() + 3 * i);
  const int pa = OpAccess::id(a), pb = OpAccess::id(b);
  return OpAccess::push(
      t, std::move(out),
      [pa, pb](const Tensor& g, const Tape& tp, std::vector<Tensor>& gs) {
        const Tensor& A = OpAccess::val(tp, pa);
        const Tensor& B = OpAccess::val(tp, pb);
        Tensor& ga = grad_slot(gs, pa, A);
        Tensor& gb = grad_slot(gs, pb, B);
        double tmp[3];
        for (int i = 0; i < A.rows(); ++i) {
          cross3(B.data() + 3 * i, g.data() + 3 * i, tmp);  // d/da = b x g
          for (int k = 0; k < 3; ++k) ga.data()[3 * i + k] += tmp[k];
          cross3(g.data() + 3 * i, A.data() + 3 * i, tmp);  // d/db = g x a
          for (int k = 0; k < 3; ++k) gb.data()[3 * i + k] += tmp[k];
        }
      },
      "cross3_rows");
}

namespace {

void require_3group(const char* op, const Tensor& a) {
  if (a.cols() % 3 != 0)
    throw DimensionError(std::string(op) + ": columns not a multiple of 3 (" +
                         shp(a) + ")");
}

}  // namespace

Var norm3_rows(Var a, double min_len) {
  Tape& t = tape_of("norm3_rows", a);
  const Tensor& av = a.value();
  require_3group("norm3_rows", av);
  const int groups = av.cols() / 3;
  Tensor out(av.rows(), groups);
  for (int i = 0; i < av.rows(); ++i)
    for (int q = 0; q < groups; ++q) {
      const double* v = av.data() + static_cast<std::size_t>(i) * av.cols() +
                        3 * q;
      const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      out(i, q) = std::max(len, min_len);
    }
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, std::move(out),
      [pa, min_len, groups](const Tensor& g, const Tape& tp,
                            std::vector<Tensor>& gs) {
        const Tensor& X = OpAccess::val(tp, pa);
        Tensor& ga = grad_slot(gs, pa, X);
        for (int i = 0; i < X.rows(); ++i)
          for (int q = 0; q < groups; ++q) {
            const std::size_t base =
                static_cast<std::size_t>(i) * X.cols() + 3 * q;
            const double* v = X.data() + base;
            const double len =
                std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
            if (len <= min_len || len == 0.0) continue;  // clamped: constant
            const double gv = g(i, q) / len;
            for (int k = 0; k < 3; ++k) ga.data()[base + k] += gv * v[k];
          }
      },
      "norm3_rows");
}

Var normalize3_rows(Var a, double min_len) {
  Tape& t = tape_of("normalize3_rows", a);
  const Tensor& av = a.value();
  require_3group("normalize3_rows", av);
  const int groups = av.cols() / 3;
  Tensor out(av.rows(), av.cols());
  for (int i = 0; i < av.rows(); ++i)
    for (int q = 0; q < groups; ++q) {
      const std::size_t base = static_cast<std::size_t>(i) * av.cols() + 3 * q;
      const double* v = av.data() + base;
      const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      const double denom = std::max(len, min_len);
      for (int k = 0; k < 3; ++k) out.data()[base + k] = v[k] / denom;
    }
  const int pa = OpAccess::id(a);
  return OpAccess::push(
      t, std::move(out),
      [pa, min_len, groups](const Tensor& g, const Tape& tp,
                            std::vector<Tensor>& gs) {
        const Tensor& X = OpAccess::val(tp, pa);
        Tensor& ga = grad_slot(gs, pa, X);
        for (int i = 0; i < X.rows(); ++i)
          for (int q = 0; q < groups; ++q) {
            const std::size_t base =
                static_cast<std::size_t>(i) * X.cols() + 3 * q;
            const double* v = X.data() + base;
            const double* gr = g.data() + base;
            const double len =
                std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
            if (len > min_len && len > 0.0) {
              const double u0 = v[0] / len, u1 = v[1] / len, u2 = v[2] / len;
              const double dot = u0 * gr[0] + u1 * gr[1] + u2 * gr[2];
              ga.data()[base + 0] += (gr[0] - u0 * dot) / len;
              ga.data()[base + 1] += (gr[1] - u1 * dot) / len;
              ga.data()[base + 2] += (gr[2] - u2 * dot) / len;
            } else if (min_len > 0.0) {
              for (int k = 0; k < 3; ++k)
                ga.data()[base + k] += gr[k] / min_len;
            }
          }
      },
      "normalize3_rows");
}

Var negative_mask(Var a) {
  Tape& t = tape_of("negative_mask", a);
  Tensor out = a.value();
  for (double& x : out.values()) x = x < 0.0 ? 1.0 : 0.0;
  return OpAccess::push(t, std::move(out), nullptr, "negative_mask");
}

int argmin_value(std::span<const Var> scalars) {
  if (scalars.empty()) throw ContractError("argmin: empty list");
  int best = 0;
  double best_v = scalars[0].scalar();
  for (int i = 1; i < static_cast<int>(scalars.size()); ++i) {
    const double v = scalars[i].scalar();
    if (v < best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

double grad_check(const std::function<Var(Tape&)>& fn,
                  std::span<Parameter* const> params, double step) {
  if (step <= 0.0) throw ContractError("grad_check: step must be positive");
  auto eval = [&fn]() {
    Tape t;
    return fn(t).scalar();
  };
  const double v1 = eval();
  const double v2 = eval();
  if (std::memcmp(&v1, &v2, sizeof(double)) != 0)
    throw OracleError("grad_check: fn is not deterministic");

  GradTable table;
  {
    Tape t;
    Var root = fn(t);
    table = t.gradients(root);
  }

  double max_rel = 0.0;
  for (Parameter* p : params) {
    const Tensor* analytic = nullptr;
    auto it = table.find(p);
    if (it != table.end()) analytic = &it->second;
    Tensor& vals = p->value();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals.data()[i];
      vals.data()[i] = orig + step;
      const double fp = eval();
      vals.data()[i] = orig - step;
      const double fm = eval();
      vals.data()[i] = orig;
      const double cd = (fp - fm) / (2.0 * step);
      const double an = analytic ? analytic->data()[i] : 0.0;
      const double rel =
          std::fabs(an - cd) / std::max(1e-8, std::fabs(cd));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace motion::diff
