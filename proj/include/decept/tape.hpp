#pragma once

#include <cstdint>
#include <vector>

#include "decept/tensor.hpp"

namespace decept::numerics {

// Handle into a Tape; only valid for the tape that produced it.
struct Value {
  std::uint32_t id = 0;
};

// Reverse-mode tape. Each primitive records one node holding its forward
// result; backward() walks the nodes in reverse creation order (which is a
// topological order by construction) and accumulates adjoints, finally
// flushing leaf adjoints into the bound tensors' grad buffers. A tape is
// meant to live for one forward/backward pass and is single-threaded;
// distinct tapes never share state.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Binds an external tensor. Its current values are captured; if it has
  // requires_grad set, backward() accumulates into its grad buffer.
  Value leaf(Tensor& t);
  // Captures a tensor by value with no gradient participation.
  Value constant(Tensor t);

  // A[m x k] * B[k x n] -> [m x n]; B may also be a length-k vector, in
  // which case the result is a length-m vector.
  Value matmul(Value a, Value b);

  // Elementwise; operands must have identical shapes, or B may be a
  // length-d vector broadcast across the rows of an L x d matrix A.
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);

  // s must hold a single element; multiplies x elementwise by it. This is
  // the scalar-gate pattern: gradient flows to both operands.
  Value scale(Value s, Value x);

  Value tanh(Value x);
  // Output clamped to the open interval: saturating logits land on the
  // nearest representable neighbor of 0 or 1, never the boundary itself.
  Value sigmoid(Value x);
  Value relu(Value x);  // derivative taken as 0 at exactly 0
  Value log(Value x);   // natural log; domain error on non-positive input

  // a * x + b with constant coefficients.
  Value affine(Value x, double a, double b);

  // Column means of an L x d matrix -> length-d vector.
  Value mean_rows(Value x);
  // Max-subtracted softmax over a vector of length >= 2.
  Value softmax(Value x);
  // Sum of all entries -> single-element value.
  Value sum(Value x);
  // Entry `index` of a vector -> single-element value.
  Value pick(Value x, std::size_t index);
  // Concatenation of two vectors.
  Value concat(Value a, Value b);

  // Seeds the (scalar) loss adjoint with 1 and accumulates parameter
  // gradients. Repeated calls accumulate again on top of existing grads.
  void backward(Value loss);

  const Shape& shape(Value v) const;
  const std::vector<double>& data(Value v) const;
  double scalar(Value v) const;
  Tensor tensor(Value v) const;
  // Adjoint of a node after backward(); mainly for tests.
  const std::vector<double>& adjoint(Value v) const;

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kMatmul,
    kAdd,
    kSub,
    kMul,
    kScale,
    kTanh,
    kSigmoid,
    kRelu,
    kLog,
    kAffine,
    kMeanRows,
    kSoftmax,
    kSum,
    kPick,
    kConcat,
  };

  struct Node {
    Op op;
    std::uint32_t a = 0, b = 0;
    Shape shape;
    std::vector<double> val;
    std::vector<double> adj;
    Tensor* sink = nullptr;
    double ca = 0.0, cb = 0.0;
    std::size_t index = 0;
  };

  Value push(Node n);
  Node& node(Value v);
  const Node& node(Value v) const;
  Value elementwise(Op op, Value a, Value b);
  Value unary(Op op, Value x);
  void backward_node(std::size_t i);

  std::vector<Node> nodes_;
};

}  // namespace decept::numerics
