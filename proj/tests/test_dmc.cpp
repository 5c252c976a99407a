#include <cmath>
#include <sstream>

#include "decept/dmc.hpp"
#include "decept/error.hpp"
#include "decept/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace decept;
using dmc::DistillHead;
using dmc::FusedHead;
using dmc::ProbDist;
using dmc::ProjectorParams;
using numerics::NamedParam;
using numerics::Tape;
using numerics::Tensor;
using numerics::Value;

namespace {

Tensor rand_seq(Rng& rng, std::size_t L, std::size_t d) {
  Tensor x = Tensor::zeros({L, d});
  for (double& v : x.data) v = rng.uniform(-2.0, 2.0);
  return x;
}

ProbDist rand_dist(Rng& rng) {
  double u = rng.uniform(0.001, 0.999);
  return ProbDist{{u, 1.0 - u}};
}

}  // namespace

TEST_CASE("divergence hand values") {
  double ln2 = 0.6931471805599453;
  CHECK(std::fabs(dmc::kl_div({{1.0, 0.0}}, {{0.5, 0.5}}) - ln2) <= 1e-9);
  double v = dmc::kl_div({{0.9, 0.1}}, {{0.5, 0.5}});
  CHECK(std::fabs(v - (0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5))) <=
        1e-9);
  CHECK(std::fabs(v - 0.3681) <= 5e-5);
  double r = dmc::kl_div({{0.5, 0.5}}, {{0.9, 0.1}});
  CHECK(std::fabs(r - 0.5108) <= 5e-5);
  CHECK(v != r);  // asymmetry at these arguments
  CHECK(dmc::kl_div({{0.3, 0.7}}, {{0.3, 0.7}}) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("divergence is non-negative over random pairs") {
  Rng rng(900);
  for (int it = 0; it < 10000; ++it) {
    ProbDist q = rand_dist(rng), p = rand_dist(rng);
    double v = dmc::kl_div(q, p);
    CHECK(v >= -1e-9);
    CHECK(std::fabs(v - oracle::kl_ref(q[0], q[1], p[0], p[1])) <= 1e-12);
  }
}

TEST_CASE("malformed distributions are rejected") {
  ProbDist over{{0.5, 0.6}};
  ProbDist negative{{-0.1, 1.1}};
  ProbDist notnum{{std::nan(""), 0.5}};
  ProbDist uniform{{0.5, 0.5}};
  ProbDist short_sum{{0.4, 0.4}};
  CHECK_THROWS_AS(over.validate(), ContractError);
  CHECK_THROWS_AS(negative.validate(), ContractError);
  CHECK_THROWS_AS(notnum.validate(), ContractError);
  CHECK_THROWS_AS(dmc::kl_div(short_sum, uniform), ContractError);
  ProbDist{{1.0, 0.0}}.validate();
  ProbDist{{0.25, 0.75}}.validate();
}

TEST_CASE("distillation loss is the sum of the two divergences") {
  Rng rng(901);
  for (int it = 0; it < 50; ++it) {
    ProbDist q = rand_dist(rng), pv = rand_dist(rng), pa = rand_dist(rng);
    CHECK(dmc::distill_loss(q, pv, pa) ==
          dmc::kl_div(q, pv) + dmc::kl_div(q, pa));
  }
}

TEST_CASE("tape divergence agrees with the scalar form and differentiates") {
  Rng rng(902);
  DistillHead head = dmc::head_init(3, 7);
  Tensor latent = Tensor::zeros({3});
  for (double& v : latent.data) v = rng.uniform(-1.0, 1.0);
  ProbDist q{{0.8, 0.2}};

  Tape tape;
  Value probs = tape.softmax(
      dmc::head_logits(tape, tape.constant(latent), head));
  Value loss = dmc::kl_vs_const(tape, q, probs);
  const auto& pd = tape.data(probs);
  CHECK(std::fabs(tape.scalar(loss) -
                  dmc::kl_div(q, ProbDist{{pd[0], pd[1]}})) <= 1e-12);

  auto f = [&]() {
    Tape t;
    Value pr = t.softmax(dmc::head_logits(t, t.constant(latent), head));
    Value l = dmc::kl_vs_const(t, q, pr);
    t.backward(l);
    return t.scalar(l);
  };
  CHECK(numerics::grad_check(f, head.named("head")).max_rel_err <= 1e-4);
}

TEST_CASE("teacher receives no gradient from the distillation loss") {
  Rng rng(903);
  std::size_t latent = 4;
  ProjectorParams pv = dmc::projector_init(5, latent, 21);
  ProjectorParams pa = dmc::projector_init(3, latent, 22);
  FusedHead fused = dmc::fused_init(2 * latent, 23);
  DistillHead head = dmc::head_init(latent, 24);
  Tensor video = rand_seq(rng, 3, 5), audio = rand_seq(rng, 2, 3);

  for (auto group : {pv.named("pv"), pa.named("pa"), fused.named("f"),
                     head.named("h")})
    for (NamedParam np : group) np.tensor->zero_grad();

  Tape tape;
  Value lv = dmc::project(tape, tape.mean_rows(tape.constant(video)), pv);
  Value la = dmc::project(tape, tape.mean_rows(tape.constant(audio)), pa);
  Value teacher = tape.softmax(dmc::fused_logits(tape, lv, la, fused));
  const auto& td = tape.data(teacher);
  ProbDist q{{td[0], td[1]}};  // detached
  Value sv = tape.softmax(dmc::head_logits(tape, lv, head));
  Value sa = tape.softmax(dmc::head_logits(tape, la, head));
  Value loss = tape.add(dmc::kl_vs_const(tape, q, sv),
                        dmc::kl_vs_const(tape, q, sa));
  tape.backward(loss);

  for (double g : fused.weight.grad) CHECK(g == 0.0);
  for (double g : fused.bias.grad) CHECK(g == 0.0);
  // The students' path is live.
  double head_norm = dmc::grad_norm(head.named("h"));
  double proj_norm = dmc::grad_norm(pv.named("pv"));
  CHECK(head_norm > 0.0);
  CHECK(proj_norm > 0.0);
}

TEST_CASE("shared head couples the modalities") {
  Rng rng(904);
  std::size_t latent = 4;
  ProjectorParams pv = dmc::projector_init(6, latent, 31);
  ProjectorParams pa = dmc::projector_init(4, latent, 32);
  DistillHead head = dmc::head_init(latent, 33);
  Tensor video = rand_seq(rng, 2, 6), audio = rand_seq(rng, 3, 4);

  ProbDist before = dmc::modality_predict(video, pv, head);

  // One gradient step on the head driven by the audio student alone.
  for (NamedParam np : head.named("h")) np.tensor->zero_grad();
  ProbDist q{{0.95, 0.05}};
  Tape tape;
  Value la = dmc::project(tape, tape.mean_rows(tape.constant(audio)), pa);
  Value sa = tape.softmax(dmc::head_logits(tape, la, head));
  tape.backward(dmc::kl_vs_const(tape, q, sa));
  for (NamedParam np : head.named("h"))
    for (std::size_t i = 0; i < np.tensor->data.size(); ++i)
      np.tensor->data[i] -= 0.5 * np.tensor->grad[i];

  ProbDist after = dmc::modality_predict(video, pv, head);
  CHECK(before[0] != after[0]);
}

TEST_CASE("doubling the head sharpens a student") {
  Rng rng(905);
  for (int it = 0; it < 20; ++it) {
    std::size_t latent = 2 + rng.index(4);
    ProjectorParams proj = dmc::projector_init(4, latent, 40 + it);
    DistillHead head = dmc::head_init(latent, 60 + it);
    for (double& v : head.bias.data) v = rng.uniform(-0.3, 0.3);
    Tensor x = rand_seq(rng, 2, 4);

    ProbDist p1 = dmc::modality_predict(x, proj, head);
    for (double& v : head.weight.data) v *= 2.0;
    for (double& v : head.bias.data) v *= 2.0;
    ProbDist p2 = dmc::modality_predict(x, proj, head);

    double m1 = std::max(p1[0], p1[1]), m2 = std::max(p2[0], p2[1]);
    if (std::fabs(p1[0] - 0.5) > 1e-9) CHECK(m2 > m1);
  }
}

TEST_CASE("value-level predictions match a plain-loop computation") {
  Rng rng(906);
  std::size_t latent = 3;
  ProjectorParams pv = dmc::projector_init(4, latent, 51);
  ProjectorParams pa = dmc::projector_init(2, latent, 52);
  FusedHead fused = dmc::fused_init(2 * latent, 53);
  DistillHead head = dmc::head_init(latent, 54);
  Tensor video = rand_seq(rng, 3, 4), audio = rand_seq(rng, 2, 2);

  auto pool = [](const Tensor& t) {
    std::size_t L = t.shape[0], d = t.shape[1];
    std::vector<double> c(d, 0.0);
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t j = 0; j < d; ++j) c[j] += t.data[l * d + j];
    for (double& v : c) v /= static_cast<double>(L);
    return c;
  };
  auto project_ref = [&](const std::vector<double>& c, ProjectorParams& p) {
    std::size_t in = c.size();
    auto h = oracle::matvec(p.p1.data, latent, in, c);
    for (std::size_t i = 0; i < latent; ++i)
      h[i] = std::tanh(h[i] + p.c1.data[i]);
    auto out = oracle::matvec(p.p2.data, latent, latent, h);
    for (std::size_t i = 0; i < latent; ++i) out[i] += p.c2.data[i];
    return out;
  };
  auto softmax2_ref = [](double z0, double z1) {
    double m = std::max(z0, z1);
    double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    return std::array<double, 2>{e0 / (e0 + e1), e1 / (e0 + e1)};
  };

  auto lv = project_ref(pool(video), pv);
  auto z = oracle::matvec(head.weight.data, 2, latent, lv);
  auto sm = softmax2_ref(z[0] + head.bias.data[0], z[1] + head.bias.data[1]);
  ProbDist got = dmc::modality_predict(video, pv, head);
  CHECK(oracle::close(got[0], sm[0]));
  CHECK(oracle::close(got[1], sm[1]));

  auto cv = pool(video), ca = pool(audio);
  std::vector<double> cat = cv;
  cat.insert(cat.end(), ca.begin(), ca.end());
  auto zf = oracle::matvec(fused.weight.data, 2, cat.size(), cat);
  auto smf =
      softmax2_ref(zf[0] + fused.bias.data[0], zf[1] + fused.bias.data[1]);
  FusedHead raw = dmc::fused_init(cv.size() + ca.size(), 53);
  raw.weight = fused.weight;
  raw.bias = fused.bias;
  ProbDist tq = dmc::teacher_predict(video, audio, raw);
  CHECK(oracle::close(tq[0], smf[0]));
  CHECK(oracle::close(tq[1], smf[1]));
}

TEST_CASE("gradient ratio handles the degenerate denominator") {
  CHECK(*dmc::grad_ratio(3.0, 2.0) == 1.5);
  CHECK(!dmc::grad_ratio(1.0, 0.0).has_value());
  CHECK(!dmc::grad_ratio(0.0, 0.0).has_value());
  CHECK(*dmc::grad_ratio(0.0, 4.0) == 0.0);
  CHECK_THROWS_AS(dmc::grad_ratio(-1.0, 2.0), ContractError);
}

TEST_CASE("gradient norm is the Frobenius norm over the group") {
  Tensor a = Tensor::zeros({2}, true);
  Tensor b = Tensor::zeros({1}, true);
  a.zero_grad();
  b.zero_grad();
  a.grad = {3.0, 0.0};
  b.grad = {4.0};
  CHECK(dmc::grad_norm({{"a", &a}, {"b", &b}}) == 5.0);
  a.grad = {0.0, 0.0};
  b.grad = {0.0};
  CHECK(dmc::grad_norm({{"a", &a}, {"b", &b}}) == 0.0);
}

TEST_CASE("gradient trace serialization") {
  std::vector<dmc::GradRecord> recs;
  recs.push_back({1, 1.5, 0.5, dmc::grad_ratio(1.5, 0.5)});
  recs.push_back({2, 2.0, 0.0, dmc::grad_ratio(2.0, 0.0)});
  std::ostringstream out;
  dmc::write_grad_trace_csv(out, recs);
  CHECK(out.str() == "step,norm_v,norm_a,ratio\n1,1.5,0.5,3\n2,2,0,\n");
}

TEST_CASE("initialization is deterministic per block") {
  ProjectorParams a = dmc::projector_init(5, 3, 77);
  ProjectorParams b = dmc::projector_init(5, 3, 77);
  CHECK(a.p1.data == b.p1.data);
  CHECK(a.p2.data == b.p2.data);
  CHECK(a.p1.shape == numerics::Shape{3, 5});
  for (double v : a.c1.data) CHECK(v == 0.0);

  // Different purposes draw from different streams even at one seed.
  DistillHead h = dmc::head_init(3, 77);
  FusedHead f = dmc::fused_init(3, 77);
  CHECK(h.weight.data != f.weight.data);

  CHECK_THROWS_AS(dmc::projector_init(0, 3, 1), ContractError);
  CHECK_THROWS_AS(dmc::projector_init(3, 0, 1), ContractError);
}
