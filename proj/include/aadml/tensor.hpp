#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace aadml {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles. Rank 0 (scalar), 1 (vector) and
// 2 (matrix) cover everything this library computes with.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, double v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  std::size_t rank() const { return shape.size(); }
  std::size_t numel() const { return data.size(); }
  bool is_scalar() const { return data.size() == 1; }

  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  double scalar_value() const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
};

std::size_t shape_numel(const Shape& shape);

// Value-level kernels shared by the tape and the tape-free eval paths.
Tensor matmul_vals(const Tensor& a, const Tensor& b);
Tensor transpose_vals(const Tensor& a);

}  // namespace aadml
