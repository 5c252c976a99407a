#pragma once

#include <functional>
#include <string>
#include <vector>

#include "decept/tensor.hpp"

namespace decept::numerics {

// A parameter tensor together with the name used in diagnostics,
// checkpoints and optimizer state.
struct NamedParam {
  std::string name;
  Tensor* tensor = nullptr;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Certifies the analytic gradients of f against central differences.
//
// f must evaluate the scalar objective at the parameters' current values
// and, as a side effect, accumulate analytic gradients into their grad
// buffers (grad_check zeroes them before each evaluation it cares about).
// f is required to be deterministic; two evaluations at the same point
// must agree bit-for-bit or an OracleError is thrown.
//
// The relative error of a coordinate is |a - n| / max(|a|, |n|, 1e-8).
// Parameter values and gradients are restored on return (gradients are
// left holding the analytic result).
GradCheckReport grad_check(const std::function<double()>& f,
                           const std::vector<NamedParam>& params,
                           double step = 1e-5);

}  // namespace decept::numerics
