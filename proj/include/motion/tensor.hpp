#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace motion {

/// Dense row-major fp64 matrix. Scalars are 1x1, row vectors 1xN.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols, double fill = 0.0);
  Tensor(int rows, int cols, std::initializer_list<double> values);

  static Tensor scalar(double v);
  static Tensor identity(int n);
  static Tensor row(std::initializer_list<double> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return v_.size(); }
  std::array<int, 2> shape() const { return {rows_, cols_}; }
  bool empty() const { return v_.empty(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }
  bool same_shape(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  double& operator()(int r, int c) {
    return v_[static_cast<std::size_t>(r) * cols_ + c];
  }
  double operator()(int r, int c) const {
    return v_[static_cast<std::size_t>(r) * cols_ + c];
  }
  /// Bounds-checked access; throws DimensionError when out of range.
  double& at(int r, int c);
  double at(int r, int c) const;

  /// Value of a 1x1 tensor; throws ContractError otherwise.
  double scalar_value() const;

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::span<double> values() { return v_; }
  std::span<const double> values() const { return v_; }

  void fill(double v);
  bool all_finite() const;
  /// Exact element-wise equality (shapes and bits).
  bool equals(const Tensor& o) const;

  Tensor& operator+=(const Tensor& o);
  Tensor& operator-=(const Tensor& o);
  Tensor& operator*=(double s);

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> v_;
};

// Host-side (non-differentiated) helpers used by data handling, metrics and
// checkpoints. The differentiable versions live in motion::diff.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, double s);
double frobenius_norm(const Tensor& a);
double l1_norm(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Rows [r0, r1) of a.
Tensor take_rows(const Tensor& a, int r0, int r1);
/// Columns [c0, c1) of a.
Tensor take_cols(const Tensor& a, int c0, int c1);
/// Stack a then b vertically (equal column counts).
Tensor vstack(const Tensor& a, const Tensor& b);

}  // namespace motion
