#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "decept/grad_check.hpp"
#include "decept/tape.hpp"
#include "decept/tensor.hpp"

namespace decept::dmc {

using numerics::NamedParam;
using numerics::Tape;
using numerics::Tensor;
using numerics::Value;

// Two-class distribution over {deceptive, truthful}; index 0 = deceptive.
struct ProbDist {
  std::array<double, 2> p{0.0, 0.0};

  double operator[](std::size_t i) const { return p[i]; }
  double& operator[](std::size_t i) { return p[i]; }
  // Throws ContractError unless entries are non-negative and sum to 1
  // within 1e-9.
  void validate() const;
};

// Per-modality two-layer map from a pooled feature vector to a shared
// latent: latent = p2 * tanh(p1 * pooled + c1) + c2.
struct ProjectorParams {
  Tensor p1, c1, p2, c2;
  std::vector<NamedParam> named(const std::string& prefix);
};
ProjectorParams projector_init(std::size_t in_dim, std::size_t latent,
                               std::uint64_t seed);

// Shared 2-way head the modality students are read out through.
struct DistillHead {
  Tensor weight, bias;  // [2 x latent], [2]
  std::vector<NamedParam> named(const std::string& prefix);
};
DistillHead head_init(std::size_t latent, std::uint64_t seed);

// Linear 2-way head over a fused feature vector.
struct FusedHead {
  Tensor weight, bias;  // [2 x in], [2]
  std::vector<NamedParam> named(const std::string& prefix);
};
FusedHead fused_init(std::size_t in_dim, std::uint64_t seed);

// Tape-level pieces.
Value project(Tape& tape, Value pooled, ProjectorParams& p);
Value head_logits(Tape& tape, Value latent, DistillHead& head);
Value fused_logits(Tape& tape, Value left, Value right, FusedHead& head);

// Student prediction for one modality sequence: pool, project, shared
// head, softmax. Plain values, no gradients.
ProbDist modality_predict(const Tensor& h_m, ProjectorParams& proj,
                          DistillHead& head);

// Fused prediction over two raw sequences: pool each, concatenate, linear
// head, softmax. Plain values: used as the distillation target, so nothing
// ever backpropagates through it.
ProbDist teacher_predict(const Tensor& h_v, const Tensor& h_a,
                         FusedHead& head);

// KL(q || p) with both entries floored by 1e-12 inside the log.
double kl_div(const ProbDist& q, const ProbDist& p);

// KL(q || p_v) + KL(q || p_a).
double distill_loss(const ProbDist& q, const ProbDist& p_v,
                    const ProbDist& p_a);

// Tape version of KL(q || p) with a constant target q; gradient flows only
// through the student probabilities.
Value kl_vs_const(Tape& tape, const ProbDist& q, Value probs);

// One step's projector gradient norms. ratio is absent when the audio norm
// is zero (never reported as infinity).
struct GradRecord {
  std::size_t step = 0;
  double norm_v = 0.0;
  double norm_a = 0.0;
  std::optional<double> ratio;
};

std::optional<double> grad_ratio(double norm_v, double norm_a);

// Frobenius norm over the gradients of a parameter group.
double grad_norm(const std::vector<NamedParam>& params);

void write_grad_trace_csv(std::ostream& out,
                          const std::vector<GradRecord>& records);

}  // namespace decept::dmc
