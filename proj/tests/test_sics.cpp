#include <cmath>
#include <cstring>

#include "decept/error.hpp"
#include "decept/rng.hpp"
#include "decept/sics.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace decept;
using numerics::NamedParam;
using numerics::Tape;
using numerics::Tensor;
using numerics::Value;
using sics::SicsConfig;
using sics::SicsParams;
using sics::SicsTrace;

namespace {

void randomize(SicsParams& p, Rng& rng, double scale = 1.2) {
  for (NamedParam np : p.named("p"))
    for (double& v : np.tensor->data) v = rng.uniform(-scale, scale);
}

Tensor rand_seq(Rng& rng, std::size_t L, std::size_t d) {
  Tensor x = Tensor::zeros({L, d});
  for (double& v : x.data) v = rng.uniform(-2.0, 2.0);
  return x;
}

}  // namespace

TEST_CASE("adapter matches the plain-loop reference") {
  Rng rng(101);
  for (int it = 0; it < 100; ++it) {
    SicsConfig cfg;
    cfg.dim = 1 + rng.index(5);
    cfg.hidden = rng.index(5);  // 0 exercises the same-as-dim default
    cfg.lambda = std::array<double, 3>{0.0, 0.2, 0.7}[rng.index(3)];
    cfg.seed = 50 + it;
    SicsParams p = sics::sics_init(cfg);
    randomize(p, rng);

    std::size_t L = 1 + rng.index(4);
    Tensor x = rand_seq(rng, L, cfg.dim);

    SicsTrace trace;
    Tensor out = sics::sics_apply(x, p, cfg, &trace);
    oracle::SicsRef ref = oracle::sics_reference(x.data, L, cfg.dim, p, cfg);

    REQUIRE(out.data.size() == ref.output.size());
    for (std::size_t i = 0; i < ref.output.size(); ++i)
      CHECK(oracle::close(out.data[i], ref.output[i]));
    CHECK(oracle::close(trace.gate, ref.gate));
    for (std::size_t j = 0; j < cfg.dim; ++j) {
      CHECK(oracle::close(trace.residual[j], ref.dz[j]));
      CHECK(oracle::close(trace.w_plus[j], ref.wp[j]));
      CHECK(oracle::close(trace.w_minus[j], ref.wm[j]));
    }
    for (std::size_t i = 0; i < ref.refined.size(); ++i)
      CHECK(oracle::close(trace.refined.data[i], ref.refined[i]));
  }
}

TEST_CASE("polarity worked example") {
  SicsConfig cfg;
  cfg.dim = 2;
  cfg.lambda = 0.2;
  SicsParams p = sics::sics_init(cfg);
  // Zero polarity matrices leave the rectifier inputs equal to the biases.
  p.w_plus = Tensor::zeros({2, 2});
  p.w_minus = Tensor::zeros({2, 2});
  p.b_plus = Tensor::from({2}, {0.5, -0.3});
  p.b_minus = Tensor::from({2}, {0.2, 0.1});

  Tensor x = Tensor::from({1, 2}, {1.0, -2.0});
  SicsTrace trace;
  Tensor out = sics::sics_apply(x, p, cfg, &trace);

  CHECK(std::fabs(trace.refined.data[0] - 0.3) <= 1e-12);
  CHECK(std::fabs(trace.refined.data[1] - 0.2) <= 1e-12);
  CHECK(std::fabs(out.data[0] - 0.86) <= 1e-12);
  CHECK(std::fabs(out.data[1] + 1.56) <= 1e-12);
}

TEST_CASE("zero blend weight is a bitwise identity") {
  Rng rng(77);
  SicsConfig cfg;
  cfg.dim = 4;
  cfg.hidden = 3;
  cfg.lambda = 0.0;
  SicsParams p = sics::sics_init(cfg);
  randomize(p, rng);
  Tensor x = rand_seq(rng, 3, 4);
  Tensor out = sics::sics_apply(x, p, cfg);
  CHECK(std::memcmp(out.data.data(), x.data.data(),
                    x.data.size() * sizeof(double)) == 0);
}

TEST_CASE("zero input is a fixed point") {
  Rng rng(78);
  SicsConfig cfg;
  cfg.dim = 5;
  cfg.lambda = 0.6;
  SicsParams p = sics::sics_init(cfg);
  randomize(p, rng);
  Tensor x = Tensor::zeros({2, 5});
  SicsTrace trace;
  Tensor out = sics::sics_apply(x, p, cfg, &trace);
  for (double v : trace.refined.data) CHECK(v == 0.0);
  for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("swapping the polarity branches negates the refinement") {
  Rng rng(79);
  SicsConfig cfg;
  cfg.dim = 3;
  cfg.lambda = 0.4;
  SicsParams p = sics::sics_init(cfg);
  randomize(p, rng);
  Tensor x = rand_seq(rng, 2, 3);

  SicsTrace t1;
  sics::sics_apply(x, p, cfg, &t1);
  std::swap(p.w_plus, p.w_minus);
  std::swap(p.b_plus, p.b_minus);
  SicsTrace t2;
  sics::sics_apply(x, p, cfg, &t2);
  for (std::size_t i = 0; i < t1.refined.data.size(); ++i)
    CHECK(t2.refined.data[i] == -t1.refined.data[i]);
}

TEST_CASE("gate stays strictly inside the unit interval") {
  Rng rng(80);
  for (int it = 0; it < 10000; ++it) {
    SicsConfig cfg;
    cfg.dim = 1 + rng.index(6);
    cfg.seed = it;
    SicsParams p = sics::sics_init(cfg);
    // Occasionally extreme weights probe saturation.
    randomize(p, rng, it % 7 == 0 ? 60.0 : 2.0);
    Tensor x = rand_seq(rng, 1 + rng.index(3), cfg.dim);
    SicsTrace trace;
    sics::sics_apply(x, p, cfg, &trace);
    CHECK(trace.gate > 0.0);
    CHECK(trace.gate < 1.0);
  }
}

TEST_CASE("adapter gradients match central differences") {
  Rng rng(81);
  SicsConfig cfg;
  cfg.dim = 3;
  cfg.hidden = 2;
  cfg.lambda = 0.3;
  cfg.residual_penalty = 0.05;
  SicsParams p = sics::sics_init(cfg);
  randomize(p, rng, 0.8);
  Tensor x = rand_seq(rng, 2, 3);
  Tensor r = Tensor::zeros({2, 3});
  for (double& v : r.data) v = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1 : 1);

  auto f = [&]() {
    Tape tape;
    sics::SicsOut out = sics::sics_forward(tape, tape.constant(x), p, cfg);
    Value loss = tape.sum(tape.mul(out.output, tape.constant(r)));
    loss = tape.add(loss,
                    tape.affine(tape.sum(tape.mul(out.residual, out.residual)),
                                cfg.residual_penalty, 0.0));
    tape.backward(loss);
    return tape.scalar(loss);
  };
  auto rep = numerics::grad_check(f, p.named("sics"));
  CHECK(rep.max_rel_err <= 1e-4);
}

TEST_CASE("initialization is deterministic and shaped as documented") {
  SicsConfig cfg;
  cfg.dim = 4;
  cfg.hidden = 3;
  cfg.seed = 11;
  SicsParams a = sics::sics_init(cfg);
  SicsParams b = sics::sics_init(cfg);
  auto an = a.named("s"), bn = b.named("s");
  REQUIRE(an.size() == bn.size());
  for (std::size_t i = 0; i < an.size(); ++i) {
    CHECK(an[i].name == bn[i].name);
    CHECK(an[i].tensor->data == bn[i].tensor->data);
  }

  cfg.seed = 12;
  SicsParams c = sics::sics_init(cfg);
  CHECK(c.w1.data != a.w1.data);

  CHECK(a.w1.shape == numerics::Shape{3, 4});
  CHECK(a.w2.shape == numerics::Shape{4, 3});
  CHECK(a.w_gate.shape == numerics::Shape{1, 4});
  CHECK(a.w_plus.shape == numerics::Shape{4, 4});
  for (const Tensor* t : {&a.b1, &a.b2, &a.b_gate, &a.b_global, &a.b_plus,
                          &a.b_minus})
    for (double v : t->data) CHECK(v == 0.0);
  for (double v : a.w1.data) CHECK(std::fabs(v) <= 1.0 / 2.0);  // 1/sqrt(4)
  for (double v : a.w2.data) CHECK(std::fabs(v) <= 1.0 / std::sqrt(3.0));
}

TEST_CASE("configuration validation") {
  SicsConfig cfg;
  cfg.dim = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg.dim = 3;
  cfg.lambda = 1.4;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg.lambda = 0.2;
  cfg.residual_penalty = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg.residual_penalty = 0.0;
  cfg.validate();
  CHECK(cfg.hidden_width() == 3);
  cfg.hidden = 7;
  CHECK(cfg.hidden_width() == 7);
}
