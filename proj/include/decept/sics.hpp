#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "decept/grad_check.hpp"
#include "decept/tape.hpp"
#include "decept/tensor.hpp"

namespace decept::sics {

using numerics::NamedParam;
using numerics::Tape;
using numerics::Tensor;
using numerics::Value;

struct SicsConfig {
  std::size_t dim = 0;     // feature width d
  std::size_t hidden = 0;  // residual-net width; 0 means "same as dim"
  double lambda = 0.2;     // blend weight of the refined features
  double residual_penalty = 0.0;  // optional L2 pressure on the residual
  std::uint64_t seed = 1;

  std::size_t hidden_width() const { return hidden ? hidden : dim; }
  void validate() const;  // throws ContractError
};

// Learnable state of one adapter instance. Layout:
//   w1 [hidden x d], b1 [hidden], w2 [d x hidden], b2 [d]   residual net
//   w_gate [1 x d], b_gate [1]                              gate
//   b_global [d]                                            learned prior
//   w_plus/w_minus [d x d], b_plus/b_minus [d]              polarity split
struct SicsParams {
  Tensor w1, b1, w2, b2;
  Tensor w_gate, b_gate;
  Tensor b_global;
  Tensor w_plus, b_plus, w_minus, b_minus;

  std::vector<NamedParam> named(const std::string& prefix);
};

// Weight matrices uniform in +-1/sqrt(fan_in); all biases and the global
// prior start at zero. Deterministic in cfg.seed.
SicsParams sics_init(const SicsConfig& cfg);

// Mean over the rows of an L x d sequence -> context vector c [d].
Value context_pool(Tape& tape, Value x);

// dz = w2 * tanh(w1 * c + b1) + b2
Value residual_net(Tape& tape, Value c, SicsParams& p);

struct GateFuse {
  Value gate;        // single-element, strictly inside (0, 1)
  Value modulation;  // w = tanh(gate * b_global + (1 - gate) * dz)  [d]
};
GateFuse gate_fuse(Tape& tape, Value dz, SicsParams& p);

struct Polarity {
  Value w_plus;   // [d]
  Value w_minus;  // [d]
  Value refined;  // x (.) relu(w_plus) - x (.) relu(w_minus)  [L x d]
};
Polarity polarity_refine(Tape& tape, Value x, Value w, SicsParams& p);

struct SicsOut {
  Value output;    // lambda * refined + (1 - lambda) * x  [L x d]
  Value residual;  // dz [d]
  Value gate;
  Value w_plus, w_minus;
  Value refined;
};

// Full adapter pass over one L x d sequence.
SicsOut sics_forward(Tape& tape, Value x, SicsParams& p, const SicsConfig& cfg);

// Per-call record of the adapter's internals on one sequence.
struct SicsTrace {
  double gate = 0.0;
  std::vector<double> residual, w_plus, w_minus;
  Tensor refined;
};

// Convenience evaluation without an external tape (no gradients).
Tensor sics_apply(const Tensor& x, SicsParams& p, const SicsConfig& cfg,
                  SicsTrace* trace = nullptr);

}  // namespace decept::sics
