#include "motion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "motion/errors.hpp"
#include "motion/kernels.hpp"

namespace motion {

namespace {
std::string shape_str(int r, int c) {
  return std::to_string(r) + "x" + std::to_string(c);
}
}  // namespace

Tensor::Tensor(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), v_(static_cast<std::size_t>(rows) * cols, fill) {
  if (rows < 0 || cols < 0)
    throw DimensionError("tensor: negative shape " + shape_str(rows, cols));
}

Tensor::Tensor(int rows, int cols, std::initializer_list<double> values)
    : Tensor(rows, cols) {
  if (values.size() != v_.size())
    throw DimensionError("tensor: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(rows, cols));
  std::copy(values.begin(), values.end(), v_.begin());
}

Tensor Tensor::scalar(double v) {
  Tensor t(1, 1);
  t.v_[0] = v;
  return t;
}

Tensor Tensor::identity(int n) {
  Tensor t(n, n);
  for (int i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::row(std::initializer_list<double> values) {
  Tensor t(1, static_cast<int>(values.size()));
  std::copy(values.begin(), values.end(), t.v_.begin());
  return t;
}

double& Tensor::at(int r, int c) {
  if (r < 0 || r >= rows_ || c < 0 || c >= cols_)
    throw DimensionError("tensor: index (" + std::to_string(r) + "," +
                         std::to_string(c) + ") outside " +
                         shape_str(rows_, cols_));
  return (*this)(r, c);
}

double Tensor::at(int r, int c) const {
  return const_cast<Tensor*>(this)->at(r, c);
}

double Tensor::scalar_value() const {
  if (!is_scalar())
    throw ContractError("tensor: scalar_value on shape " +
                        shape_str(rows_, cols_));
  return v_[0];
}

void Tensor::fill(double v) { std::fill(v_.begin(), v_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(v_.begin(), v_.end(),
                     [](double x) { return std::isfinite(x); });
}

bool Tensor::equals(const Tensor& o) const {
  return same_shape(o) && std::memcmp(v_.data(), o.v_.data(),
                                      v_.size() * sizeof(double)) == 0;
}

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!same_shape(o))
    throw DimensionError("tensor +=: " + shape_str(rows_, cols_) + " vs " +
                         shape_str(o.rows_, o.cols_));
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
  if (!same_shape(o))
    throw DimensionError("tensor -=: " + shape_str(rows_, cols_) + " vs " +
                         shape_str(o.rows_, o.cols_));
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& x : v_) x *= s;
  return *this;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw DimensionError("matmul: " + shape_str(a.rows(), a.cols()) + " * " +
                         shape_str(b.rows(), b.cols()));
  Tensor c(a.rows(), b.cols());
  kernels::matmul_nn(a.rows(), a.cols(), b.cols(), a.data(), b.data(),
                     c.data());
  return c;
}

Tensor transpose(const Tensor& a) {
  Tensor t(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  Tensor c = a;
  c += b;
  return c;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  Tensor c = a;
  c -= b;
  return c;
}

Tensor operator*(const Tensor& a, double s) {
  Tensor c = a;
  c *= s;
  return c;
}

double frobenius_norm(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.values()) acc += x * x;
  return std::sqrt(acc);
}

double l1_norm(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.values()) acc += std::fabs(x);
  return acc;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double x : a.values()) m = std::max(m, std::fabs(x));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw DimensionError("max_abs_diff: " + shape_str(a.rows(), a.cols()) +
                         " vs " + shape_str(b.rows(), b.cols()));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

Tensor take_rows(const Tensor& a, int r0, int r1) {
  if (r0 < 0 || r1 > a.rows() || r0 > r1)
    throw DimensionError("take_rows: [" + std::to_string(r0) + "," +
                         std::to_string(r1) + ") of " +
                         shape_str(a.rows(), a.cols()));
  Tensor out(r1 - r0, a.cols());
  std::memcpy(out.data(), a.data() + static_cast<std::size_t>(r0) * a.cols(),
              out.size() * sizeof(double));
  return out;
}

Tensor take_cols(const Tensor& a, int c0, int c1) {
  if (c0 < 0 || c1 > a.cols() || c0 > c1)
    throw DimensionError("take_cols: [" + std::to_string(c0) + "," +
                         std::to_string(c1) + ") of " +
                         shape_str(a.rows(), a.cols()));
  Tensor out(a.rows(), c1 - c0);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = c0; j < c1; ++j) out(i, j - c0) = a(i, j);
  return out;
}

Tensor vstack(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw DimensionError("vstack: " + shape_str(a.rows(), a.cols()) + " on " +
                         shape_str(b.rows(), b.cols()));
  Tensor out(a.rows() + b.rows(), a.cols());
  std::memcpy(out.data(), a.data(), a.size() * sizeof(double));
  std::memcpy(out.data() + a.size(), b.data(), b.size() * sizeof(double));
  return out;
}

}  // namespace motion
