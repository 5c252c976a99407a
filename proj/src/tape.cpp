#include "decept/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "decept/error.hpp"

namespace decept::numerics {

namespace {

// Indexed by Tape::Op's underlying value; keep in sync with the enum.
const char* op_name(int op) {
  static const char* const names[] = {
      "leaf", "matmul", "add",    "sub",       "mul",     "scale",
      "tanh", "sigmoid", "relu",  "log",       "affine",  "mean_rows",
      "softmax", "sum",  "pick",  "concat"};
  return names[op];
}

void check_all_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericError(std::string(what) + " produced a non-finite value");
}

// Two-branch form avoids overflow; the clamp keeps saturating logits from
// rounding onto the boundaries the true function never reaches.
double stable_sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    double e = std::exp(x);
    s = e / (1.0 + e);
  }
  const double lo = std::numeric_limits<double>::denorm_min();
  const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::min(std::max(s, lo), hi);
}

}  // namespace

Value Tape::push(Node n) {
  check_all_finite(n.val, op_name(static_cast<int>(n.op)));
  nodes_.push_back(std::move(n));
  return Value{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tape::Node& Tape::node(Value v) { return nodes_.at(v.id); }
const Tape::Node& Tape::node(Value v) const { return nodes_.at(v.id); }

Value Tape::leaf(Tensor& t) {
  if (t.data.empty())
    throw DimensionError("cannot record an empty tensor");
  Node n;
  n.op = Op::kLeaf;
  n.shape = t.shape;
  n.val = t.data;
  n.sink = &t;
  return push(std::move(n));
}

Value Tape::constant(Tensor t) {
  if (t.data.empty())
    throw DimensionError("cannot record an empty tensor");
  Node n;
  n.op = Op::kLeaf;
  n.shape = t.shape;
  n.val = std::move(t.data);
  return push(std::move(n));
}

Value Tape::matmul(Value a, Value b) {
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape.size() != 2)
    throw DimensionError("matmul: left operand must be a matrix, got " +
                         shape_str(A.shape));
  std::size_t m = A.shape[0], k = A.shape[1];
  bool vec = B.shape.size() == 1;
  std::size_t bk = B.shape[0];
  std::size_t bn = vec ? 1 : (B.shape.size() == 2 ? B.shape[1] : 0);
  if (!vec && B.shape.size() != 2)
    throw DimensionError("matmul: right operand must be a matrix or vector, got " +
                         shape_str(B.shape));
  if (k != bk)
    throw DimensionError("matmul: inner dimensions disagree: " +
                         shape_str(A.shape) + " vs " + shape_str(B.shape));
  Node n;
  n.op = Op::kMatmul;
  n.a = a.id;
  n.b = b.id;
  n.shape = vec ? Shape{m} : Shape{m, bn};
  n.val.assign(m * bn, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < bn; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t)
        acc += A.val[i * k + t] * B.val[t * bn + j];
      n.val[i * bn + j] = acc;
    }
  return push(std::move(n));
}

Value Tape::elementwise(Op op, Value a, Value b) {
  const Node& A = node(a);
  const Node& B = node(b);
  bool same = A.shape == B.shape;
  bool row = A.shape.size() == 2 && B.shape.size() == 1 &&
             B.shape[0] == A.shape[1];
  if (!same && !row)
    throw DimensionError(std::string(op_name(static_cast<int>(op))) +
                         ": incompatible shapes " + shape_str(A.shape) +
                         " vs " + shape_str(B.shape));
  Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.shape = A.shape;
  n.val.resize(A.val.size());
  std::size_t cols = row ? B.shape[0] : 0;
  for (std::size_t i = 0; i < A.val.size(); ++i) {
    double x = A.val[i];
    double y = same ? B.val[i] : B.val[i % cols];
    n.val[i] = op == Op::kAdd ? x + y : op == Op::kSub ? x - y : x * y;
  }
  return push(std::move(n));
}

Value Tape::add(Value a, Value b) { return elementwise(Op::kAdd, a, b); }
Value Tape::sub(Value a, Value b) { return elementwise(Op::kSub, a, b); }
Value Tape::mul(Value a, Value b) { return elementwise(Op::kMul, a, b); }

Value Tape::scale(Value s, Value x) {
  const Node& S = node(s);
  if (S.val.size() != 1)
    throw DimensionError("scale: first operand must hold one element, got " +
                         shape_str(S.shape));
  const Node& X = node(x);
  Node n;
  n.op = Op::kScale;
  n.a = s.id;
  n.b = x.id;
  n.shape = X.shape;
  n.val.resize(X.val.size());
  for (std::size_t i = 0; i < X.val.size(); ++i) n.val[i] = S.val[0] * X.val[i];
  return push(std::move(n));
}

Value Tape::unary(Op op, Value x) {
  const Node& X = node(x);
  Node n;
  n.op = op;
  n.a = x.id;
  n.shape = X.shape;
  n.val.resize(X.val.size());
  for (std::size_t i = 0; i < X.val.size(); ++i) {
    double v = X.val[i];
    switch (op) {
      case Op::kTanh: n.val[i] = std::tanh(v); break;
      case Op::kSigmoid: n.val[i] = stable_sigmoid(v); break;
      case Op::kRelu: n.val[i] = v > 0.0 ? v : 0.0; break;
      case Op::kLog:
        if (v <= 0.0)
          throw NumericError("log: input must be positive, got " +
                             std::to_string(v));
        n.val[i] = std::log(v);
        break;
      default: break;
    }
  }
  return push(std::move(n));
}

Value Tape::tanh(Value x) { return unary(Op::kTanh, x); }
Value Tape::sigmoid(Value x) { return unary(Op::kSigmoid, x); }
Value Tape::relu(Value x) { return unary(Op::kRelu, x); }
Value Tape::log(Value x) { return unary(Op::kLog, x); }

Value Tape::affine(Value x, double a, double b) {
  const Node& X = node(x);
  Node n;
  n.op = Op::kAffine;
  n.a = x.id;
  n.ca = a;
  n.cb = b;
  n.shape = X.shape;
  n.val.resize(X.val.size());
  for (std::size_t i = 0; i < X.val.size(); ++i) n.val[i] = a * X.val[i] + b;
  return push(std::move(n));
}

Value Tape::mean_rows(Value x) {
  const Node& X = node(x);
  if (X.shape.size() != 2)
    throw DimensionError("mean_rows: need a matrix, got " + shape_str(X.shape));
  std::size_t rows = X.shape[0], cols = X.shape[1];
  Node n;
  n.op = Op::kMeanRows;
  n.a = x.id;
  n.shape = {cols};
  n.val.assign(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) n.val[c] += X.val[r * cols + c];
  for (std::size_t c = 0; c < cols; ++c) n.val[c] /= static_cast<double>(rows);
  return push(std::move(n));
}

Value Tape::softmax(Value x) {
  const Node& X = node(x);
  if (X.shape.size() != 1 || X.shape[0] < 2)
    throw DimensionError("softmax: need a vector of length >= 2, got " +
                         shape_str(X.shape));
  check_all_finite(X.val, "softmax input");
  Node n;
  n.op = Op::kSoftmax;
  n.a = x.id;
  n.shape = X.shape;
  n.val.resize(X.val.size());
  double mx = X.val[0];
  for (double v : X.val) mx = std::max(mx, v);
  double z = 0.0;
  for (std::size_t i = 0; i < X.val.size(); ++i) {
    n.val[i] = std::exp(X.val[i] - mx);
    z += n.val[i];
  }
  for (double& v : n.val) v /= z;
  return push(std::move(n));
}

Value Tape::sum(Value x) {
  const Node& X = node(x);
  Node n;
  n.op = Op::kSum;
  n.a = x.id;
  n.shape = {1};
  double acc = 0.0;
  for (double v : X.val) acc += v;
  n.val = {acc};
  return push(std::move(n));
}

Value Tape::pick(Value x, std::size_t index) {
  const Node& X = node(x);
  if (index >= X.val.size())
    throw DimensionError("pick: index " + std::to_string(index) +
                         " out of range for " + shape_str(X.shape));
  Node n;
  n.op = Op::kPick;
  n.a = x.id;
  n.index = index;
  n.shape = {1};
  n.val = {X.val[index]};
  return push(std::move(n));
}

Value Tape::concat(Value a, Value b) {
  const Node& A = node(a);
  const Node& B = node(b);
  if (A.shape.size() != 1 || B.shape.size() != 1)
    throw DimensionError("concat: need two vectors, got " + shape_str(A.shape) +
                         " and " + shape_str(B.shape));
  Node n;
  n.op = Op::kConcat;
  n.a = a.id;
  n.b = b.id;
  n.shape = {A.val.size() + B.val.size()};
  n.val = A.val;
  n.val.insert(n.val.end(), B.val.begin(), B.val.end());
  return push(std::move(n));
}

void Tape::backward(Value loss) {
  Node& top = node(loss);
  if (top.val.size() != 1)
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_str(top.shape));
  for (Node& n : nodes_) n.adj.assign(n.val.size(), 0.0);
  top.adj[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) backward_node(i);
  for (Node& n : nodes_)
    if (n.op == Op::kLeaf && n.sink && n.sink->requires_grad)
      for (std::size_t i = 0; i < n.adj.size(); ++i)
        n.sink->grad[i] += n.adj[i];
}

void Tape::backward_node(std::size_t i) {
  Node& n = nodes_[i];
  switch (n.op) {
    case Op::kLeaf:
      return;
    case Op::kMatmul: {
      Node& A = nodes_[n.a];
      Node& B = nodes_[n.b];
      std::size_t m = A.shape[0], k = A.shape[1];
      std::size_t bn = B.shape.size() == 1 ? 1 : B.shape[1];
      // dA = G * B^T, dB = A^T * G
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t t = 0; t < k; ++t) {
          double acc = 0.0;
          for (std::size_t c = 0; c < bn; ++c)
            acc += n.adj[r * bn + c] * B.val[t * bn + c];
          A.adj[r * k + t] += acc;
        }
      for (std::size_t t = 0; t < k; ++t)
        for (std::size_t c = 0; c < bn; ++c) {
          double acc = 0.0;
          for (std::size_t r = 0; r < m; ++r)
            acc += A.val[r * k + t] * n.adj[r * bn + c];
          B.adj[t * bn + c] += acc;
        }
      return;
    }
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul: {
      Node& A = nodes_[n.a];
      Node& B = nodes_[n.b];
      bool row = A.shape != B.shape;
      std::size_t cols = row ? B.shape[0] : 0;
      for (std::size_t j = 0; j < n.adj.size(); ++j) {
        double g = n.adj[j];
        std::size_t bj = row ? j % cols : j;
        switch (n.op) {
          case Op::kAdd:
            A.adj[j] += g;
            B.adj[bj] += g;
            break;
          case Op::kSub:
            A.adj[j] += g;
            B.adj[bj] -= g;
            break;
          default:
            A.adj[j] += g * B.val[bj];
            B.adj[bj] += g * A.val[j];
            break;
        }
      }
      return;
    }
    case Op::kScale: {
      Node& S = nodes_[n.a];
      Node& X = nodes_[n.b];
      for (std::size_t j = 0; j < n.adj.size(); ++j) {
        S.adj[0] += n.adj[j] * X.val[j];
        X.adj[j] += n.adj[j] * S.val[0];
      }
      return;
    }
    case Op::kTanh: {
      Node& X = nodes_[n.a];
      for (std::size_t j = 0; j < n.adj.size(); ++j)
        X.adj[j] += n.adj[j] * (1.0 - n.val[j] * n.val[j]);
      return;
    }
    case Op::kSigmoid: {
      Node& X = nodes_[n.a];
      for (std::size_t j = 0; j < n.adj.size(); ++j)
        X.adj[j] += n.adj[j] * n.val[j] * (1.0 - n.val[j]);
      return;
    }
    case Op::kRelu: {
      Node& X = nodes_[n.a];
      for (std::size_t j = 0; j < n.adj.size(); ++j)
        if (X.val[j] > 0.0) X.adj[j] += n.adj[j];
      return;
    }
    case Op::kLog: {
      Node& X = nodes_[n.a];
      for (std::size_t j = 0; j < n.adj.size(); ++j)
        X.adj[j] += n.adj[j] / X.val[j];
      return;
    }
    case Op::kAffine: {
      Node& X = nodes_[n.a];
      for (std::size_t j = 0; j < n.adj.size(); ++j)
        X.adj[j] += n.adj[j] * n.ca;
      return;
    }
    case Op::kMeanRows: {
      Node& X = nodes_[n.a];
      std::size_t rows = X.shape[0], cols = X.shape[1];
      double inv = 1.0 / static_cast<double>(rows);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
          X.adj[r * cols + c] += n.adj[c] * inv;
      return;
    }
    case Op::kSoftmax: {
      Node& X = nodes_[n.a];
      double dot = 0.0;
      for (std::size_t j = 0; j < n.adj.size(); ++j)
        dot += n.adj[j] * n.val[j];
      for (std::size_t j = 0; j < n.adj.size(); ++j)
        X.adj[j] += n.val[j] * (n.adj[j] - dot);
      return;
    }
    case Op::kSum: {
      Node& X = nodes_[n.a];
      for (double& g : X.adj) g += n.adj[0];
      return;
    }
    case Op::kPick: {
      nodes_[n.a].adj[n.index] += n.adj[0];
      return;
    }
    case Op::kConcat: {
      Node& A = nodes_[n.a];
      Node& B = nodes_[n.b];
      for (std::size_t j = 0; j < A.adj.size(); ++j) A.adj[j] += n.adj[j];
      for (std::size_t j = 0; j < B.adj.size(); ++j)
        B.adj[j] += n.adj[A.adj.size() + j];
      return;
    }
  }
}

const Shape& Tape::shape(Value v) const { return node(v).shape; }
const std::vector<double>& Tape::data(Value v) const { return node(v).val; }

double Tape::scalar(Value v) const {
  const Node& n = node(v);
  if (n.val.size() != 1)
    throw ContractError("scalar(): value has shape " + shape_str(n.shape));
  return n.val[0];
}

Tensor Tape::tensor(Value v) const {
  const Node& n = node(v);
  return Tensor::from(n.shape, n.val);
}

const std::vector<double>& Tape::adjoint(Value v) const {
  return node(v).adj;
}

}  // namespace decept::numerics
