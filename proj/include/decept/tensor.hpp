#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace decept::numerics {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles. Plain value type: copying copies data
// and gradient, so tensors can be snapshotted or moved between threads
// freely. Gradients accumulate into `grad` (same length as `data`) when
// `requires_grad` is set; they are only ever written by Tape::backward and
// zero_grad.
struct Tensor {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  std::size_t numel() const;
  std::size_t ndim() const { return shape.size(); }
  // 2-d accessors; throw DimensionError when the tensor is not a matrix.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  void set_requires_grad(bool on);
  void zero_grad();
  // Throws NumericError if any entry is NaN or infinite.
  void check_finite(const std::string& what) const;
};

}  // namespace decept::numerics
