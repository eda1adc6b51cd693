#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "motion/tensor.hpp"

// Reverse-mode automatic differentiation over Tensor values. A Tape records
// every forward operation; backward() replays them in reverse and
// accumulates gradients into the Parameters reachable from the root.
//
// A Tape is single-threaded. Independent tapes share no mutable state (they
// only read parameter values), so separate tapes may run on separate
// threads; gradients() returns a per-tape table that the caller reduces in
// whatever order it needs for determinism.

namespace motion::diff {

class Tape;

/// Trainable tensor with an accumulated gradient of the same shape.
class Parameter {
 public:
  explicit Parameter(Tensor value, std::string name = {});

  const Tensor& value() const { return value_; }
  Tensor& value() { return value_; }
  const Tensor& grad() const { return grad_; }
  Tensor& grad() { return grad_; }
  const std::string& name() const { return name_; }
  std::uint64_t id() const { return id_; }

  void zero_grad() { grad_.fill(0.0); }

  Parameter(const Parameter&) = delete;
  Parameter& operator=(const Parameter&) = delete;
  Parameter(Parameter&&) = default;
  Parameter& operator=(Parameter&&) = default;

 private:
  Tensor value_;
  Tensor grad_;
  std::string name_;
  std::uint64_t id_;
};

/// Handle to a node on a Tape. Cheap to copy; invalidated with its Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
  double scalar() const { return value().scalar_value(); }
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  friend struct OpAccess;
  Var(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Gradients of one root with respect to the parameters it reaches.
using GradTable = std::unordered_map<const Parameter*, Tensor>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf with no gradient tracking.
  Var constant(Tensor v);
  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }
  /// Differentiable leaf; snapshots the parameter's current value.
  Var leaf(Parameter& p);

  /// Accumulates d(root)/d(param) into each reachable Parameter's grad.
  /// Repeated calls keep accumulating until Parameter::zero_grad.
  void backward(Var root);
  /// Same sweep, but returns the gradients instead of touching Parameters.
  GradTable gradients(Var root) const;

  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend class Var;
  friend struct OpAccess;

  using BackFn =
      std::function<void(const Tensor& g, const Tape&, std::vector<Tensor>&)>;

  struct Node {
    Tensor value;
    BackFn back;           // empty for leaves and constants
    Parameter* param = nullptr;
  };

  Var push(Tensor value, BackFn back, const char* op);
  const Tensor& value_of(int id) const { return nodes_[id].value; }
  void run_backward(Var root, std::vector<Tensor>& grads) const;

  std::vector<Node> nodes_;
};

// ---- Forward operations ----------------------------------------------
// Each records its backward transform on the tape. Shape violations raise
// DimensionError naming the op; domain violations raise DomainError. All
// outputs are checked finite.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);                  // elementwise
Var add_scalar(Var a, double c);
Var scale(Var a, double s);
Var scale(Var a, Var s);                // s is a 1x1 Var
Var tanh(Var a);
Var prelu(Var a, double slope);         // max(x,0) + slope*min(x,0)
Var prelu(Var a, Var slope);            // slope is a 1x1 Var
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var acos(Var a);
Var clamp(Var a, double lo, double hi);
Var sum(Var a);                         // -> 1x1
Var mean(Var a);                        // -> 1x1
Var l1_norm(Var a);                     // -> 1x1
Var l2_norm(Var a);                     // -> 1x1
Var rowsum(Var a);                      // n x m -> n x 1
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(Var a, Var b);
Var concat_cols(Var a, Var b);
Var slice(Var a, int r0, int r1, int c0, int c1);  // half-open
Var rows(Var a, int r0, int r1);
Var cols(Var a, int c0, int c1);
Var transpose(Var a);
Var tile_rows(Var a, int n);            // 1 x m -> n x m
Var add_rowvec(Var a, Var b);           // n x m + 1 x m broadcast
Var diag_embed(Var a);                  // 1 x n -> n x n diagonal
// Per-row cross product of n x 3 operands.
Var cross3_rows(Var a, Var b);
// Treat every 3 consecutive columns as one vector: lengths (n x 3g -> n x g)
// and unit vectors (n x 3g -> n x 3g). Lengths below min_len are clamped
// before dividing, which keeps both maps finite and differentiable.
Var norm3_rows(Var a, double min_len = 0.0);
Var normalize3_rows(Var a, double min_len = 0.0);
// 1 where the entry is negative, else 0. Piecewise constant: no gradient.
Var negative_mask(Var a);

/// Index of the smallest scalar; ties break toward the lowest index.
int argmin_value(std::span<const Var> scalars);

// ---- Gradient oracle ---------------------------------------------------

/// Max over parameter entries of |analytic - central difference| /
/// max(1e-8, |central difference|). fn must be deterministic; the check
/// runs it twice and raises OracleError when the two values disagree.
double grad_check(const std::function<Var(Tape&)>& fn,
                  std::span<Parameter* const> params, double step);

}  // namespace motion::diff
