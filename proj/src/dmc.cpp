#include "decept/dmc.hpp"

#include <cmath>

#include "decept/error.hpp"
#include "decept/rng.hpp"
#include "decept/serialize.hpp"

namespace decept::dmc {

namespace {

constexpr double kEps = 1e-12;

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  Tensor t = Tensor::zeros({rows, cols}, true);
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

ProbDist softmax2(double z0, double z1) {
  double m = std::max(z0, z1);
  double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
  double s = e0 + e1;
  return ProbDist{{e0 / s, e1 / s}};
}

}  // namespace

void ProbDist::validate() const {
  for (double v : p)
    if (!(v >= 0.0))
      throw ContractError("ProbDist: negative or NaN probability " +
                          std::to_string(v));
  double s = p[0] + p[1];
  if (std::fabs(s - 1.0) > 1e-9)
    throw ContractError("ProbDist: probabilities sum to " + std::to_string(s) +
                        ", not 1");
}

std::vector<NamedParam> ProjectorParams::named(const std::string& prefix) {
  return {{prefix + ".p1", &p1},
          {prefix + ".c1", &c1},
          {prefix + ".p2", &p2},
          {prefix + ".c2", &c2}};
}

ProjectorParams projector_init(std::size_t in_dim, std::size_t latent,
                               std::uint64_t seed) {
  if (in_dim == 0 || latent == 0)
    throw ContractError("projector_init: dims must be positive");
  ProjectorParams p;
  p.p1 = uniform_matrix(latent, in_dim, mix_seed(seed, "proj.p1"));
  p.c1 = Tensor::zeros({latent}, true);
  p.p2 = uniform_matrix(latent, latent, mix_seed(seed, "proj.p2"));
  p.c2 = Tensor::zeros({latent}, true);
  return p;
}

std::vector<NamedParam> DistillHead::named(const std::string& prefix) {
  return {{prefix + ".weight", &weight}, {prefix + ".bias", &bias}};
}

DistillHead head_init(std::size_t latent, std::uint64_t seed) {
  DistillHead h;
  h.weight = uniform_matrix(2, latent, mix_seed(seed, "distill.weight"));
  h.bias = Tensor::zeros({2}, true);
  return h;
}

std::vector<NamedParam> FusedHead::named(const std::string& prefix) {
  return {{prefix + ".weight", &weight}, {prefix + ".bias", &bias}};
}

FusedHead fused_init(std::size_t in_dim, std::uint64_t seed) {
  FusedHead h;
  h.weight = uniform_matrix(2, in_dim, mix_seed(seed, "fused.weight"));
  h.bias = Tensor::zeros({2}, true);
  return h;
}

Value project(Tape& tape, Value pooled, ProjectorParams& p) {
  Value h = tape.tanh(
      tape.add(tape.matmul(tape.leaf(p.p1), pooled), tape.leaf(p.c1)));
  return tape.add(tape.matmul(tape.leaf(p.p2), h), tape.leaf(p.c2));
}

Value head_logits(Tape& tape, Value latent, DistillHead& head) {
  return tape.add(tape.matmul(tape.leaf(head.weight), latent),
                  tape.leaf(head.bias));
}

Value fused_logits(Tape& tape, Value left, Value right, FusedHead& head) {
  Value cat = tape.concat(left, right);
  return tape.add(tape.matmul(tape.leaf(head.weight), cat),
                  tape.leaf(head.bias));
}

ProbDist modality_predict(const Tensor& h_m, ProjectorParams& proj,
                          DistillHead& head) {
  Tape tape;
  Value pooled = tape.mean_rows(tape.constant(h_m));
  Value logits = head_logits(tape, project(tape, pooled, proj), head);
  const auto& z = tape.data(logits);
  return softmax2(z[0], z[1]);
}

ProbDist teacher_predict(const Tensor& h_v, const Tensor& h_a,
                         FusedHead& head) {
  Tape tape;
  Value pv = tape.mean_rows(tape.constant(h_v));
  Value pa = tape.mean_rows(tape.constant(h_a));
  Value logits = fused_logits(tape, pv, pa, head);
  const auto& z = tape.data(logits);
  return softmax2(z[0], z[1]);
}

double kl_div(const ProbDist& q, const ProbDist& p) {
  q.validate();
  p.validate();
  double acc = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    acc += q[i] * std::log((q[i] + kEps) / (p[i] + kEps));
  return acc;
}

double distill_loss(const ProbDist& q, const ProbDist& p_v,
                    const ProbDist& p_a) {
  return kl_div(q, p_v) + kl_div(q, p_a);
}

Value kl_vs_const(Tape& tape, const ProbDist& q, Value probs) {
  q.validate();
  if (tape.shape(probs) != numerics::Shape{2})
    throw DimensionError("kl_vs_const: student must be a 2-class distribution");
  Tensor qt = Tensor::from({2}, {q[0], q[1]});
  Tensor lq =
      Tensor::from({2}, {std::log(q[0] + kEps), std::log(q[1] + kEps)});
  Value log_p = tape.log(tape.affine(probs, 1.0, kEps));
  Value diff = tape.sub(tape.constant(lq), log_p);
  return tape.sum(tape.mul(tape.constant(qt), diff));
}

std::optional<double> grad_ratio(double norm_v, double norm_a) {
  if (norm_v < 0.0 || norm_a < 0.0)
    throw ContractError("grad_ratio: norms must be non-negative");
  if (norm_a == 0.0) return std::nullopt;
  return norm_v / norm_a;
}

double grad_norm(const std::vector<NamedParam>& params) {
  double acc = 0.0;
  for (const NamedParam& p : params)
    for (double g : p.tensor->grad) acc += g * g;
  return std::sqrt(acc);
}

void write_grad_trace_csv(std::ostream& out,
                          const std::vector<GradRecord>& records) {
  out << "step,norm_v,norm_a,ratio\n";
  for (const GradRecord& r : records) {
    out << r.step << "," << numerics::format_double(r.norm_v) << ","
        << numerics::format_double(r.norm_a) << ",";
    if (r.ratio) out << numerics::format_double(*r.ratio);
    out << "\n";
  }
}

}  // namespace decept::dmc
