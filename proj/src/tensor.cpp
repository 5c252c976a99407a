#include "decept/tensor.hpp"

#include <cmath>

#include "decept/error.hpp"

namespace decept::numerics {

std::string shape_str(const Shape& s) {
  if (s.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out;
}

namespace {

std::size_t checked_numel(const Shape& shape) {
  if (shape.empty())
    throw DimensionError("tensor shape must have at least one dimension");
  std::size_t n = 1;
  for (std::size_t d : shape) {
    if (d == 0)
      throw DimensionError("tensor dimensions must be positive, got " +
                           shape_str(shape));
    n *= d;
  }
  return n;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::size_t n = checked_numel(shape);
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(n, 0.0);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  std::size_t n = checked_numel(shape);
  if (values.size() != n)
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(values);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

std::size_t Tensor::numel() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::size_t Tensor::rows() const {
  if (ndim() != 2)
    throw DimensionError("rows() needs a matrix, got " + shape_str(shape));
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (ndim() != 2)
    throw DimensionError("cols() needs a matrix, got " + shape_str(shape));
  return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return data[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return data[r * cols() + c];
}

void Tensor::set_requires_grad(bool on) {
  requires_grad = on;
  if (on)
    grad.assign(data.size(), 0.0);
  else
    grad.clear();
}

void Tensor::zero_grad() {
  if (requires_grad) grad.assign(data.size(), 0.0);
}

void Tensor::check_finite(const std::string& what) const {
  for (double v : data)
    if (!std::isfinite(v))
      throw NumericError(what + " contains a non-finite value");
}

}  // namespace decept::numerics
