#include "aadml/tensor.hpp"

#include <Eigen/Core>
#include <cmath>
#include <sstream>

#include "aadml/error.hpp"

namespace aadml {

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_numel(shape)) {
    throw ShapeError("tensor: " + std::to_string(data.size()) + " values do not fill shape " +
                     shape_str(shape));
  }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::full(Shape s, double v) {
  Tensor t(std::move(s));
  std::fill(t.data.begin(), t.data.end(), v);
  return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows(): tensor of shape " + shape_str(shape) + " is not a matrix");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols(): tensor of shape " + shape_str(shape) + " is not a matrix");
  return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }

double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

double Tensor::scalar_value() const {
  if (numel() != 1) {
    throw ShapeError("scalar_value(): tensor of shape " + shape_str(shape) + " is not a scalar");
  }
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

namespace {
using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const EigenRowMajor>;
using Map = Eigen::Map<EigenRowMajor>;
}  // namespace

Tensor matmul_vals(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: shapes " + shape_str(a.shape) + " x " + shape_str(b.shape) +
                     " do not conform");
  }
  Tensor out({a.rows(), b.cols()});
  ConstMap ma(a.data.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
  ConstMap mb(b.data.data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
  Map mo(out.data.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(b.cols()));
  mo.noalias() = ma * mb;
  return out;
}

Tensor transpose_vals(const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose: tensor of shape " + shape_str(a.shape) + " is not a matrix");
  }
  Tensor out({a.cols(), a.rows()});
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out.data[c * a.rows() + r] = a.data[r * a.cols() + c];
  return out;
}

}  // namespace aadml
