#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cladnet {

// Raised when an operation receives tensors whose dimensions do not fit.
// The message names the offending dimension(s).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of 64-bit floats. Tensors are plain values: every
// operation returns a fresh tensor, nothing mutates an input in place once
// it has been handed to the tape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor row(std::vector<double> v);                    // [1 x n]
  static Tensor column(std::vector<double> v);                 // [n x 1]
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);
  static Tensor zeros_like(const Tensor& t);
  static Tensor filled(Shape shape, double v);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t numel() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  // 2-D accessors; throw ShapeError when the tensor is not a matrix.
  std::size_t rows() const;
  std::size_t cols() const;
  double operator()(std::size_t r, std::size_t c) const;
  double& operator()(std::size_t r, std::size_t c);

  double at_flat(std::size_t i) const { return values_[i]; }
  double& at_flat(std::size_t i) { return values_[i]; }

  std::span<const double> data() const { return values_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool all_finite() const;
  double scalar_value() const;  // requires numel() == 1

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && values_ == other.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
};

void check_matrix(const Tensor& t, const char* what);
void check_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace cladnet
