#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "decept/dmc.hpp"
#include "decept/sics.hpp"
#include "decept/tensor.hpp"

namespace decept::harness {

using numerics::NamedParam;
using numerics::Tensor;

// ---------------------------------------------------------------------------
// Synthetic data

struct SyntheticSpec {
  std::size_t n_samples = 256;
  std::size_t d_v = 12, d_a = 12;  // feature widths
  std::size_t l_v = 4, l_a = 4;    // sequence lengths
  double snr_v = 1.0, snr_a = 1.0;
  // Fraction of dimensions carrying amplified, label-free noise, and the
  // amplification factor. ceil(frac * d) dimensions are spiked when > 0.
  double spike_frac = 0.0;
  double spike_gain = 1.0;
  double class_balance = 0.5;  // fraction labeled deceptive
  std::uint64_t seed = 1;

  void validate() const;
};

// label 0 = deceptive, 1 = truthful.
struct Sample {
  Tensor video, audio;
  int label = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::size_t> spike_dims_v, spike_dims_a;
};

// Class-conditional Gaussian token sequences: each token is
// sign(label) * snr * mu + unit noise on informative dimensions, and
// spike_gain * noise on spiked dimensions. Deterministic in spec.seed.
Dataset gen_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Model and training configuration

struct TrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 10;
  // When nonzero, bounds the run in optimizer steps directly (the
  // acceptance properties are stated in steps).
  std::size_t steps = 0;
  std::size_t batch_size = 32;
  double alpha = 0.1;   // weight of the distillation loss
  double lambda = 0.2;  // refinement blend weight
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  bool use_sics = true;
  bool use_dmc = true;
  std::size_t latent = 8;       // projector output width
  std::size_t sics_hidden = 0;  // 0: same as the modality width
  double residual_penalty = 0.0;

  void validate() const;
};

// Always-present pieces: per-modality projectors and the fused prediction
// head over the two projected latents. Optional pieces: the refinement
// adapters (one per modality) and the shared distillation head; the latter
// is never part of the prediction path, so discarding it cannot change
// inference.
struct Model {
  sics::SicsConfig sics_cfg_v, sics_cfg_a;
  std::optional<sics::SicsParams> sics_v, sics_a;
  dmc::ProjectorParams proj_v, proj_a;
  dmc::FusedHead fused;
  std::optional<dmc::DistillHead> distill;

  static Model init(const TrainConfig& cfg, std::size_t d_v, std::size_t d_a);

  std::vector<NamedParam> named();
  std::vector<NamedParam> projector_params_v() { return proj_v.named("proj_v"); }
  std::vector<NamedParam> projector_params_a() { return proj_a.named("proj_a"); }

  // Inference path only: refine (if enabled), pool, project, fused head.
  dmc::ProbDist predict(const Tensor& video, const Tensor& audio);
  void zero_grad();
};

// ---------------------------------------------------------------------------
// Evaluation

struct Metrics {
  double accuracy = 0.0;
  double f1 = 0.0;  // positive class = deceptive (index 0)
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn,
                            std::size_t fn);
// Argmax prediction; exact ties resolve to deceptive.
Metrics evaluate(Model& model, const Dataset& data);

// ---------------------------------------------------------------------------
// Training

struct StepRecord {
  std::size_t step = 0;
  double loss_rep = 0.0;
  double loss_distill = 0.0;
  double total = 0.0;
  double norm_v = 0.0, norm_a = 0.0;
  std::optional<double> ratio;
};

struct EpochRecord {
  std::size_t epoch = 0;
  Metrics train;
};

struct TrainTrace {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

struct StepResult {
  double loss_rep = 0.0;
  double loss_distill = 0.0;
  double total = 0.0;
};

// Runs forward/backward over the index batch, averaging losses and
// accumulating averaged gradients on top of whatever is in the grad
// buffers. Aborts with a NumericError carrying parameter/gradient extrema
// if the loss goes non-finite.
//
// `teacher`, when given, supplies the distillation targets (one per batch
// position) instead of the in-graph fused prediction. The target is a
// detached constant either way; pinning it lets a finite-difference probe
// evaluate the same function backward differentiates.
StepResult accumulate_batch(Model& model, const TrainConfig& cfg,
                            const Dataset& data,
                            std::span<const std::size_t> batch,
                            const std::vector<dmc::ProbDist>* teacher = nullptr);

// Decoupled-weight-decay adaptive-moment optimizer.
class AdamW {
 public:
  AdamW(std::vector<NamedParam> params, double lr, double weight_decay,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step();

 private:
  std::vector<NamedParam> params_;
  double lr_, wd_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

class Trainer {
 public:
  Trainer(Model& model, const TrainConfig& cfg);

  // One optimizer step on the given batch; records losses and the
  // projector gradient norms observed after backward of the total loss.
  StepRecord train_step(const Dataset& data,
                        std::span<const std::size_t> batch);
  // Full run: deterministic batch order derived from cfg.seed, epoch-end
  // metrics, step cap per cfg.steps.
  TrainTrace run(const Dataset& data);

  const TrainTrace& trace() const { return trace_; }

 private:
  Model& model_;
  TrainConfig cfg_;
  AdamW opt_;
  TrainTrace trace_;
  std::size_t step_count_ = 0;
};

// Time-averaged |ln r| over the last `window` steps with a defined ratio;
// absent when no step in the window has one.
std::optional<double> balance_stat(const TrainTrace& trace,
                                   std::size_t window = 50);

void write_trace_csv(std::ostream& out, const TrainTrace& trace);

// ---------------------------------------------------------------------------
// Experiments

struct VariantRun {
  std::string variant;
  std::uint64_t seed = 0;
  Metrics final_train;
  std::optional<double> balance;
  TrainTrace trace;
};

struct ExperimentReport {
  std::vector<VariantRun> runs;
};

// Trains {Base, +SICS, +DMC, Full} per seed on identically generated data;
// shared parameter blocks start identically across variants of a seed.
ExperimentReport run_experiment(const SyntheticSpec& spec,
                                const TrainConfig& cfg,
                                std::span<const std::uint64_t> seeds);

nlohmann::ordered_json comparison_json(const ExperimentReport& report);

// ---------------------------------------------------------------------------
// Gradient certification

struct GradcheckCase {
  std::string name;
  numerics::GradCheckReport report;
};

struct GradcheckSuiteReport {
  std::vector<GradcheckCase> cases;
  double worst = 0.0;
  std::string worst_case;
  std::string worst_param;
  bool pass(double tol) const { return worst <= tol; }
};

// Small-dimension certification of the refinement adapter alone, the
// distillation objective alone, and the full training objective, each both
// at initialization and after `trained_steps` optimizer steps.
GradcheckSuiteReport gradcheck_suite(std::uint64_t seed,
                                     std::size_t trained_steps = 100);

}  // namespace decept::harness
