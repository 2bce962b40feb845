#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fairrec/common.hpp"

namespace fairrec {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "}";
}

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

// Dense row-major tensor of doubles, rank 1 or 2 in practice.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), values(shape_numel(shape), 0.0) {
    validate();
  }
  Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    validate();
    if (values.size() != shape_numel(shape))
      throw ShapeError("Tensor: " + std::to_string(values.size()) +
                       " values do not fill shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor scalar(double x) { return Tensor({1}, {x}); }

  static Tensor row(std::vector<double> v) {
    Shape s{1, v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  // Rows/cols with the rank-1 = single-row convention used by vector ops.
  std::size_t rows() const { return rank() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 1); }

  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  double scalar_value() const {
    if (numel() != 1)
      throw ContractError("Tensor::scalar_value: tensor has shape " + shape_str(shape));
    return values[0];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double x) {
    for (double& v : values) v = x;
  }

 private:
  void validate() const {
    for (std::size_t d : shape)
      if (d == 0) throw ShapeError("Tensor: zero dimension in shape " + shape_str(shape));
  }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm_sq(const std::vector<double>& a) { return dot(a, a); }

}  // namespace fairrec
