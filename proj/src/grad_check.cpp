#include "decept/grad_check.hpp"

#include <cmath>

#include "decept/error.hpp"

namespace decept::numerics {

GradCheckReport grad_check(const std::function<double()>& f,
                           const std::vector<NamedParam>& params,
                           double step) {
  if (step <= 0.0) throw ContractError("grad_check: step must be positive");
  for (const NamedParam& p : params)
    if (!p.tensor) throw ContractError("grad_check: null parameter tensor");

  auto zero_all = [&] {
    for (const NamedParam& p : params) p.tensor->zero_grad();
  };

  zero_all();
  double v1 = f();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const NamedParam& p : params) analytic.push_back(p.tensor->grad);

  zero_all();
  double v2 = f();
  if (v1 != v2)
    throw OracleError("grad_check: objective is not deterministic (" +
                      std::to_string(v1) + " vs " + std::to_string(v2) + ")");

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = *params[pi].tensor;
    if (!t.requires_grad) continue;
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      double saved = t.data[i];
      t.data[i] = saved + step;
      double fp = f();
      t.data[i] = saved - step;
      double fm = f();
      t.data[i] = saved;
      double numeric = (fp - fm) / (2.0 * step);
      double a = analytic[pi][i];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      double rel = std::fabs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = params[pi].name;
        report.worst_index = i;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }

  // Leave the analytic gradients in place for the caller.
  for (std::size_t pi = 0; pi < params.size(); ++pi)
    if (params[pi].tensor->requires_grad)
      params[pi].tensor->grad = analytic[pi];
  return report;
}

}  // namespace decept::numerics
