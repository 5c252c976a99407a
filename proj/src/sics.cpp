#include "decept/sics.hpp"

#include <cmath>

#include "decept/error.hpp"
#include "decept/rng.hpp"

namespace decept::sics {

void SicsConfig::validate() const {
  if (dim == 0) throw ContractError("SicsConfig: dim must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ContractError("SicsConfig: lambda must lie in [0, 1], got " +
                        std::to_string(lambda));
  if (residual_penalty < 0.0)
    throw ContractError("SicsConfig: residual_penalty must be >= 0");
}

std::vector<NamedParam> SicsParams::named(const std::string& prefix) {
  return {
      {prefix + ".w1", &w1},           {prefix + ".b1", &b1},
      {prefix + ".w2", &w2},           {prefix + ".b2", &b2},
      {prefix + ".w_gate", &w_gate},   {prefix + ".b_gate", &b_gate},
      {prefix + ".b_global", &b_global},
      {prefix + ".w_plus", &w_plus},   {prefix + ".b_plus", &b_plus},
      {prefix + ".w_minus", &w_minus}, {prefix + ".b_minus", &b_minus},
  };
}

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  Tensor t = Tensor::zeros({rows, cols}, true);
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

SicsParams sics_init(const SicsConfig& cfg) {
  cfg.validate();
  std::size_t d = cfg.dim, h = cfg.hidden_width();
  SicsParams p;
  {
    Rng rng(mix_seed(cfg.seed, "sics.w1"));
    p.w1 = uniform_matrix(h, d, rng);
  }
  p.b1 = Tensor::zeros({h}, true);
  {
    Rng rng(mix_seed(cfg.seed, "sics.w2"));
    p.w2 = uniform_matrix(d, h, rng);
  }
  p.b2 = Tensor::zeros({d}, true);
  {
    Rng rng(mix_seed(cfg.seed, "sics.w_gate"));
    p.w_gate = uniform_matrix(1, d, rng);
  }
  p.b_gate = Tensor::zeros({1}, true);
  p.b_global = Tensor::zeros({d}, true);
  {
    Rng rng(mix_seed(cfg.seed, "sics.w_plus"));
    p.w_plus = uniform_matrix(d, d, rng);
  }
  p.b_plus = Tensor::zeros({d}, true);
  {
    Rng rng(mix_seed(cfg.seed, "sics.w_minus"));
    p.w_minus = uniform_matrix(d, d, rng);
  }
  p.b_minus = Tensor::zeros({d}, true);
  return p;
}

Value context_pool(Tape& tape, Value x) { return tape.mean_rows(x); }

Value residual_net(Tape& tape, Value c, SicsParams& p) {
  Value h = tape.tanh(tape.add(tape.matmul(tape.leaf(p.w1), c), tape.leaf(p.b1)));
  return tape.add(tape.matmul(tape.leaf(p.w2), h), tape.leaf(p.b2));
}

GateFuse gate_fuse(Tape& tape, Value dz, SicsParams& p) {
  Value logit =
      tape.add(tape.matmul(tape.leaf(p.w_gate), dz), tape.leaf(p.b_gate));
  Value gate = tape.sigmoid(logit);
  // w = tanh(g * b_global + (1 - g) * dz); the gate trades the learned
  // global prior off against the sample's own residual.
  Value one_minus = tape.affine(gate, -1.0, 1.0);
  Value blended = tape.add(tape.scale(gate, tape.leaf(p.b_global)),
                           tape.scale(one_minus, dz));
  return {gate, tape.tanh(blended)};
}

Polarity polarity_refine(Tape& tape, Value x, Value w, SicsParams& p) {
  Value wp =
      tape.add(tape.matmul(tape.leaf(p.w_plus), w), tape.leaf(p.b_plus));
  Value wm =
      tape.add(tape.matmul(tape.leaf(p.w_minus), w), tape.leaf(p.b_minus));
  // Enhancing and suppressing channels act on the raw sequence separately.
  Value refined = tape.sub(tape.mul(x, tape.relu(wp)), tape.mul(x, tape.relu(wm)));
  return {wp, wm, refined};
}

SicsOut sics_forward(Tape& tape, Value x, SicsParams& p,
                     const SicsConfig& cfg) {
  cfg.validate();
  Value c = context_pool(tape, x);
  Value dz = residual_net(tape, c, p);
  GateFuse gf = gate_fuse(tape, dz, p);
  Polarity pol = polarity_refine(tape, x, gf.modulation, p);
  Value out = tape.add(tape.affine(pol.refined, cfg.lambda, 0.0),
                       tape.affine(x, 1.0 - cfg.lambda, 0.0));
  return {out, dz, gf.gate, pol.w_plus, pol.w_minus, pol.refined};
}

Tensor sics_apply(const Tensor& x, SicsParams& p, const SicsConfig& cfg,
                  SicsTrace* trace) {
  Tape tape;
  Value xv = tape.constant(x);
  SicsOut out = sics_forward(tape, xv, p, cfg);
  if (trace) {
    trace->gate = tape.scalar(out.gate);
    trace->residual = tape.data(out.residual);
    trace->w_plus = tape.data(out.w_plus);
    trace->w_minus = tape.data(out.w_minus);
    trace->refined = tape.tensor(out.refined);
  }
  return tape.tensor(out.output);
}

}  // namespace decept::sics
