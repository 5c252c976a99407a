#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>

#include "decept/error.hpp"
#include "decept/grad_check.hpp"
#include "decept/rng.hpp"
#include "decept/serialize.hpp"
#include "decept/tape.hpp"
#include "doctest.h"

using namespace decept;
using numerics::GradCheckReport;
using numerics::NamedParam;
using numerics::Tape;
using numerics::Tensor;
using numerics::Value;

namespace {

Tensor rand_tensor(Rng& rng, const numerics::Shape& shape, double lo = -1.0,
                   double hi = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  t.set_requires_grad(true);
  return t;
}

// Scalar readout with fixed weights so no symmetry can cancel errors.
Value readout(Tape& tape, Value v, const Tensor& r) {
  return tape.sum(tape.mul(v, tape.constant(r)));
}

Tensor fixed_weights(Rng& rng, const numerics::Shape& shape) {
  Tensor t = Tensor::zeros(shape);
  for (double& v : t.data) v = rng.uniform(0.5, 1.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return t;
}

double fd_err(const std::function<double()>& f, std::vector<NamedParam> ps) {
  return numerics::grad_check(f, ps).max_rel_err;
}

}  // namespace

TEST_CASE("matmul forward matches hand computation") {
  Tape tape;
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  Value c = tape.matmul(tape.constant(a), tape.constant(b));
  const auto& d = tape.data(c);
  CHECK(d[0] == 19.0);
  CHECK(d[1] == 22.0);
  CHECK(d[2] == 43.0);
  CHECK(d[3] == 50.0);

  Tensor v = Tensor::from({2}, {1, -1});
  Value mv = tape.matmul(tape.constant(a), tape.constant(v));
  CHECK(tape.data(mv)[0] == -1.0);
  CHECK(tape.data(mv)[1] == -1.0);
  CHECK(tape.shape(mv) == numerics::Shape{2});
}

TEST_CASE("primitive gradients match central differences") {
  Rng rng(42);
  double tol = 1e-6;

  auto unary_case = [&](const numerics::Shape& shape, auto op, double lo,
                        double hi) {
    Tensor x = rand_tensor(rng, shape, lo, hi);
    Tensor r = fixed_weights(rng, shape);
    auto f = [&]() {
      Tape tape;
      Value y = op(tape, tape.leaf(x));
      Value loss = readout(tape, y, r);
      tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(fd_err(f, {{"x", &x}}) <= tol);
  };

  SUBCASE("matmul matrix-matrix") {
    for (auto [m, k, n] :
         {std::array<std::size_t, 3>{2, 3, 2}, {1, 4, 3}, {3, 1, 2}, {4, 4, 4}}) {
      Tensor a = rand_tensor(rng, {m, k});
      Tensor b = rand_tensor(rng, {k, n});
      Tensor r = fixed_weights(rng, {m, n});
      auto f = [&]() {
        Tape tape;
        Value y = tape.matmul(tape.leaf(a), tape.leaf(b));
        Value loss = readout(tape, y, r);
        tape.backward(loss);
        return tape.scalar(loss);
      };
      CHECK(fd_err(f, {{"a", &a}, {"b", &b}}) <= tol);
    }
  }

  SUBCASE("matmul matrix-vector") {
    for (auto [m, k] : {std::array<std::size_t, 2>{3, 4}, {1, 2}, {5, 3}}) {
      Tensor a = rand_tensor(rng, {m, k});
      Tensor b = rand_tensor(rng, {k});
      Tensor r = fixed_weights(rng, {m});
      auto f = [&]() {
        Tape tape;
        Value y = tape.matmul(tape.leaf(a), tape.leaf(b));
        Value loss = readout(tape, y, r);
        tape.backward(loss);
        return tape.scalar(loss);
      };
      CHECK(fd_err(f, {{"a", &a}, {"b", &b}}) <= tol);
    }
  }

  SUBCASE("add sub mul, same shape") {
    for (auto [m, n] : {std::array<std::size_t, 2>{2, 3}, {3, 3}, {1, 5}}) {
      Tensor a = rand_tensor(rng, {m, n});
      Tensor b = rand_tensor(rng, {m, n});
      Tensor r = fixed_weights(rng, {m, n});
      for (int which = 0; which < 3; ++which) {
        auto f = [&]() {
          Tape tape;
          Value va = tape.leaf(a), vb = tape.leaf(b);
          Value y = which == 0   ? tape.add(va, vb)
                    : which == 1 ? tape.sub(va, vb)
                                 : tape.mul(va, vb);
          Value loss = readout(tape, y, r);
          tape.backward(loss);
          return tape.scalar(loss);
        };
        CHECK(fd_err(f, {{"a", &a}, {"b", &b}}) <= tol);
      }
    }
  }

  SUBCASE("add sub mul, vector broadcast over rows") {
    for (auto [m, n] : {std::array<std::size_t, 2>{3, 4}, {2, 2}, {4, 1}}) {
      Tensor a = rand_tensor(rng, {m, n});
      Tensor b = rand_tensor(rng, {n});
      Tensor r = fixed_weights(rng, {m, n});
      for (int which = 0; which < 3; ++which) {
        auto f = [&]() {
          Tape tape;
          Value va = tape.leaf(a), vb = tape.leaf(b);
          Value y = which == 0   ? tape.add(va, vb)
                    : which == 1 ? tape.sub(va, vb)
                                 : tape.mul(va, vb);
          Value loss = readout(tape, y, r);
          tape.backward(loss);
          return tape.scalar(loss);
        };
        CHECK(fd_err(f, {{"a", &a}, {"b", &b}}) <= tol);
      }
    }
  }

  SUBCASE("scale routes gradient to both operands") {
    Tensor s = rand_tensor(rng, {1});
    Tensor x = rand_tensor(rng, {2, 3});
    Tensor r = fixed_weights(rng, {2, 3});
    auto f = [&]() {
      Tape tape;
      Value y = tape.scale(tape.leaf(s), tape.leaf(x));
      Value loss = readout(tape, y, r);
      tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(fd_err(f, {{"s", &s}, {"x", &x}}) <= tol);
  }

  SUBCASE("pointwise nonlinearities") {
    unary_case({6}, [](Tape& t, Value v) { return t.tanh(v); }, -2.0, 2.0);
    unary_case({5}, [](Tape& t, Value v) { return t.sigmoid(v); }, -3.0, 3.0);
    unary_case({4}, [](Tape& t, Value v) { return t.log(v); }, 0.5, 2.0);
    unary_case({2, 3}, [](Tape& t, Value v) { return t.affine(v, 1.7, -0.3); },
               -1.0, 1.0);

    // Rectifier inputs pushed away from the kink.
    Tensor x = rand_tensor(rng, {8});
    for (double& v : x.data) v += v >= 0.0 ? 0.05 : -0.05;
    Tensor r = fixed_weights(rng, {8});
    auto f = [&]() {
      Tape tape;
      Value loss = readout(tape, tape.relu(tape.leaf(x)), r);
      tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(fd_err(f, {{"x", &x}}) <= tol);
  }

  SUBCASE("reductions and reshuffles") {
    Tensor xm = rand_tensor(rng, {4, 3});
    Tensor rm = fixed_weights(rng, {3});
    auto f_mean = [&]() {
      Tape tape;
      Value loss = readout(tape, tape.mean_rows(tape.leaf(xm)), rm);
      tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(fd_err(f_mean, {{"x", &xm}}) <= tol);

    Tensor x = rand_tensor(rng, {5});
    auto f_softmax = [&]() {
      Tape tape;
      Value y = tape.softmax(tape.leaf(x));
      Value loss = tape.log(tape.pick(y, 2));
      tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(fd_err(f_softmax, {{"x", &x}}) <= tol);

    Tensor x2 = rand_tensor(rng, {3, 3});
    auto f_sum = [&]() {
      Tape tape;
      Value loss = tape.sum(tape.leaf(x2));
      tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(fd_err(f_sum, {{"x", &x2}}) <= tol);

    Tensor x3 = rand_tensor(rng, {6});
    auto f_pick = [&]() {
      Tape tape;
      Value loss = tape.pick(tape.leaf(x3), 4);
      tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(fd_err(f_pick, {{"x", &x3}}) <= tol);

    Tensor a = rand_tensor(rng, {3});
    Tensor b = rand_tensor(rng, {4});
    Tensor r = fixed_weights(rng, {7});
    auto f_concat = [&]() {
      Tape tape;
      Value loss = readout(tape, tape.concat(tape.leaf(a), tape.leaf(b)), r);
      tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(fd_err(f_concat, {{"a", &a}, {"b", &b}}) <= tol);
  }
}

TEST_CASE("composite graphs stay within the looser tolerance") {
  Rng rng(7);
  double tol = 1e-4;

  SUBCASE("two-layer net with cross-entropy readout") {
    Tensor x = rand_tensor(rng, {3});
    x.set_requires_grad(false);
    Tensor w1 = rand_tensor(rng, {4, 3});
    Tensor b1 = rand_tensor(rng, {4}, -0.1, 0.1);
    Tensor w2 = rand_tensor(rng, {2, 4});
    Tensor b2 = rand_tensor(rng, {2}, -0.1, 0.1);
    auto f = [&]() {
      Tape tape;
      Value h = tape.tanh(tape.add(tape.matmul(tape.leaf(w1), tape.constant(x)),
                                   tape.leaf(b1)));
      Value logits = tape.add(tape.matmul(tape.leaf(w2), h), tape.leaf(b2));
      Value probs = tape.softmax(logits);
      Value loss = tape.affine(tape.log(tape.pick(probs, 0)), -1.0, 0.0);
      tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(fd_err(f, {{"w1", &w1}, {"b1", &b1}, {"w2", &w2}, {"b2", &b2}}) <=
          tol);
  }

  SUBCASE("gated blend with concatenation") {
    Tensor x = rand_tensor(rng, {3, 4});
    x.set_requires_grad(false);
    Tensor wg = rand_tensor(rng, {4});
    Tensor u = rand_tensor(rng, {4});
    Tensor r = fixed_weights(rng, {8});
    auto f = [&]() {
      Tape tape;
      Value pooled = tape.mean_rows(tape.constant(x));
      Value g = tape.sigmoid(tape.sum(tape.mul(tape.leaf(wg), pooled)));
      Value one_minus = tape.affine(g, -1.0, 1.0);
      Value blend = tape.add(tape.scale(g, tape.leaf(u)),
                             tape.scale(one_minus, pooled));
      Value both = tape.concat(tape.tanh(blend), tape.mul(pooled, tape.leaf(u)));
      Value loss = readout(tape, both, r);
      tape.backward(loss);
      return tape.scalar(loss);
    };
    CHECK(fd_err(f, {{"wg", &wg}, {"u", &u}}) <= tol);
  }
}

TEST_CASE("softmax matches the closed form") {
  Tape tape;
  Tensor x = Tensor::from({2}, {std::log(3.0), 0.0});
  x.set_requires_grad(true);
  Value y = tape.softmax(tape.leaf(x));
  CHECK(tape.data(y)[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(tape.data(y)[1] == doctest::Approx(0.25).epsilon(1e-14));

  tape.backward(tape.pick(y, 0));
  // dx_i = y_i (g_i - sum_j g_j y_j) with g = [1, 0].
  CHECK(std::fabs(x.grad[0] - 0.1875) <= 1e-12);
  CHECK(std::fabs(x.grad[1] + 0.1875) <= 1e-12);
}

TEST_CASE("backward accumulates across calls") {
  Tensor x = Tensor::from({3}, {0.3, -0.7, 1.1});
  x.set_requires_grad(true);
  Tape tape;
  Value loss = tape.sum(tape.mul(tape.leaf(x), tape.leaf(x)));
  tape.backward(loss);
  std::vector<double> once = x.grad;
  tape.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i)
    CHECK(x.grad[i] == 2.0 * once[i]);
}

TEST_CASE("gradients are linear in the objective") {
  Rng rng(3);
  Tensor w = rand_tensor(rng, {4});
  Tensor c1 = fixed_weights(rng, {4});
  Tensor c2 = fixed_weights(rng, {4});
  double a = 1.3, b = -2.1;

  auto grad_of = [&](const std::function<Value(Tape&, Value)>& build) {
    w.zero_grad();
    Tape tape;
    Value loss = build(tape, tape.leaf(w));
    tape.backward(loss);
    return w.grad;
  };

  auto f1 = [&](Tape& t, Value v) { return t.sum(t.mul(v, t.constant(c1))); };
  auto f2 = [&](Tape& t, Value v) {
    return t.sum(t.mul(t.tanh(v), t.constant(c2)));
  };
  std::vector<double> g1 = grad_of(f1);
  std::vector<double> g2 = grad_of(f2);
  std::vector<double> gc = grad_of([&](Tape& t, Value v) {
    return t.add(t.affine(f1(t, v), a, 0.0), t.affine(f2(t, v), b, 0.0));
  });
  for (std::size_t i = 0; i < gc.size(); ++i)
    CHECK(std::fabs(gc[i] - (a * g1[i] + b * g2[i])) <= 1e-12);
}

TEST_CASE("shape and domain violations are rejected") {
  Tape tape;
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS(tape.matmul(tape.constant(a), tape.constant(b)),
                  DimensionError);
  CHECK_THROWS_AS(tape.add(tape.constant(a), tape.constant(b)),
                  DimensionError);
  CHECK_THROWS_AS(tape.scale(tape.constant(a), tape.constant(b)),
                  DimensionError);
  CHECK_THROWS_AS(tape.mean_rows(tape.constant(Tensor::from({2}, {1, 2}))),
                  DimensionError);
  CHECK_THROWS_AS(tape.softmax(tape.constant(Tensor::scalar(1.0))),
                  DimensionError);
  CHECK_THROWS_AS(tape.pick(tape.constant(Tensor::from({2}, {1, 2})), 5),
                  DimensionError);
  CHECK_THROWS_AS(tape.log(tape.constant(Tensor::from({2}, {1.0, -0.5}))),
                  NumericError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), DimensionError);

  Tensor inf_t = Tensor::from({2}, {1.0, HUGE_VAL});
  CHECK_THROWS_AS(tape.constant(inf_t), NumericError);

  CHECK_THROWS_AS(tape.backward(tape.constant(Tensor::from({2}, {1, 2}))),
                  ContractError);
  CHECK_THROWS_AS(tape.scalar(tape.constant(Tensor::from({2}, {1, 2}))),
                  ContractError);
}

TEST_CASE("rng streams are reproducible") {
  Rng a(123), b(123), c(124);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    double x = a.uniform(), y = b.uniform();
    all_equal = all_equal && x == y;
    any_diff = any_diff || x != c.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  CHECK(all_equal);
  CHECK(any_diff);

  CHECK(mix_seed(9, "block_a") != mix_seed(9, "block_b"));
  CHECK(mix_seed(9, "block_a") == mix_seed(9, "block_a"));
  CHECK(mix_seed(9, "block_a") != mix_seed(10, "block_a"));

  std::vector<int> v1{1, 2, 3, 4, 5, 6}, v2 = v1;
  Rng s1(5), s2(5);
  s1.shuffle(v1);
  s2.shuffle(v2);
  CHECK(v1 == v2);
  CHECK_THROWS_AS(Rng(1).index(0), ContractError);
}

TEST_CASE("checkpoints survive a bit-exact round trip") {
  Tensor w = Tensor::from({2, 2}, {1.0 / 3.0, 1e-300, -0.0, 3.141592653589793});
  Tensor b = Tensor::from({3}, {5e-324, -1e208, 0.1});
  std::vector<NamedParam> params{{"w", &w}, {"b", &b}};
  auto path = std::filesystem::temp_directory_path() / "decept_ckpt_test.json";
  numerics::save_checkpoint(path, params);

  std::vector<double> w0 = w.data, b0 = b.data;
  for (double& v : w.data) v = 42.0;
  for (double& v : b.data) v = 42.0;
  numerics::load_checkpoint(path, params);
  CHECK(std::memcmp(w.data.data(), w0.data(), w0.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(b.data.data(), b0.data(), b0.size() * sizeof(double)) == 0);
  std::filesystem::remove(path);

  auto j = numerics::params_to_json(params);
  Tensor wrong = Tensor::zeros({3, 2});
  std::vector<NamedParam> renamed{{"nope", &w}};
  CHECK_THROWS_AS(numerics::params_from_json(j, renamed), ContractError);
  std::vector<NamedParam> reshaped{{"w", &wrong}, {"b", &b}};
  CHECK_THROWS_AS(numerics::params_from_json(j, reshaped), DimensionError);
}

TEST_CASE("format_double emits shortest exact representations") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 5e-324, -0.0, 2.5, -1e208,
                   3.141592653589793, 123456789.123456789}) {
    std::string s = numerics::format_double(v);
    double back = std::strtod(s.c_str(), nullptr);
    CHECK(std::memcmp(&back, &v, sizeof(double)) == 0);
  }
  CHECK(numerics::format_double(2.5) == "2.5");
  CHECK(numerics::format_double(0.0) == "0");
}

TEST_CASE("grad_check rejects nondeterministic objectives") {
  Tensor x = Tensor::from({2}, {0.4, -0.2});
  x.set_requires_grad(true);
  int calls = 0;
  auto f = [&]() {
    ++calls;
    Tape tape;
    Value loss = tape.sum(tape.mul(tape.leaf(x), tape.leaf(x)));
    tape.backward(loss);
    return tape.scalar(loss) + 1e-13 * calls;
  };
  CHECK_THROWS_AS(numerics::grad_check(f, {{"x", &x}}), OracleError);
}

TEST_CASE("grad_check flags a planted gradient error") {
  Tensor x = Tensor::from({3}, {0.8, -0.5, 0.9});
  x.set_requires_grad(true);
  auto f = [&]() {
    Tape tape;
    Value loss = tape.sum(tape.mul(tape.leaf(x), tape.leaf(x)));
    tape.backward(loss);
    x.grad[1] += 0.05;  // corrupt one coordinate
    return tape.scalar(loss);
  };
  GradCheckReport rep = numerics::grad_check(f, {{"x", &x}});
  CHECK(rep.max_rel_err > 1e-3);
  CHECK(rep.worst_param == "x");
  CHECK(rep.worst_index == 1);
}
