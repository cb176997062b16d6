#include <doctest.h>

#include <cmath>
#include <functional>
#include <optional>

#include "symcons/autodiff.hpp"
#include "symcons/errors.hpp"
#include "symcons/gradcheck.hpp"
#include "symcons/rng.hpp"

using namespace symcons;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Checks op against central differences through sum(op(inputs) * W) for a
// fixed random W.
GradCheckReport check_op(std::vector<Tensor>& inputs, const std::function<Var(std::span<const Var>)>& op,
                         double tol = 1e-6) {
  std::optional<Tensor> weights;
  ScalarObjective f = [&](Tape& tape) {
    std::vector<Var> vars;
    for (auto& x : inputs) vars.push_back(tape.parameter(x));
    Var y = op(vars);
    if (!weights) {
      Rng r(99);
      weights = random_tensor(y.shape(), r);
    }
    return sum(mul(y, tape.constant(*weights)));
  };
  std::vector<Tensor*> params;
  for (auto& x : inputs) params.push_back(&x);
  GradCheckOptions opt;
  opt.h = 1e-5;
  opt.tol = tol;
  return gradient_check(f, params, opt);
}

std::vector<long double> softmax_oracle(const std::vector<long double>& x) {
  long double m = x[0];
  for (auto v : x) m = std::max(m, v);
  long double s = 0;
  std::vector<long double> e;
  for (auto v : x) {
    e.push_back(std::exp(v - m));
    s += e.back();
  }
  for (auto& v : e) v /= s;
  return e;
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.grad.empty());
  t.set_requires_grad(true);
  CHECK(t.grad.size() == t.size());
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ContractError);
  CHECK_THROWS_AS(t.item(), ContractError);
}

TEST_CASE("matmul variants match naive loops") {
  Rng rng(1);
  Tape tape(false);
  const Tensor a = random_tensor({3, 4, 5}, rng), b = random_tensor({5, 2}, rng), bb = random_tensor({3, 5, 2}, rng);
  const Tensor bt = random_tensor({3, 2, 5}, rng);
  const Var va = tape.constant(a);
  const Tensor shared = matmul(va, tape.constant(b)).value();
  const Tensor batched = matmul(va, tape.constant(bb)).value();
  const Tensor transposed = matmul(va, tape.constant(bt), true).value();
  for (std::size_t g = 0; g < 3; ++g) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        long double s1 = 0, s2 = 0, s3 = 0;
        for (std::size_t k = 0; k < 5; ++k) {
          const double x = a.values[(g * 4 + i) * 5 + k];
          s1 += x * b.values[k * 2 + j];
          s2 += x * bb.values[(g * 5 + k) * 2 + j];
          s3 += x * bt.values[(g * 2 + j) * 5 + k];
        }
        const std::size_t o = (g * 4 + i) * 2 + j;
        CHECK(shared.values[o] == doctest::Approx(static_cast<double>(s1)).epsilon(1e-13));
        CHECK(batched.values[o] == doctest::Approx(static_cast<double>(s2)).epsilon(1e-13));
        CHECK(transposed.values[o] == doctest::Approx(static_cast<double>(s3)).epsilon(1e-13));
      }
    }
  }
  CHECK_THROWS_AS(matmul(va, tape.constant(Tensor({4, 2}))), ContractError);
}

TEST_CASE("softmax examples") {
  Tape tape(false);
  const auto half = softmax(tape.constant(Tensor({2}, {0.0, 0.0}))).value();
  CHECK(half.values[0] == 0.5);
  CHECK(half.values[1] == 0.5);

  const auto big = softmax(tape.constant(Tensor({2}, {1000.0, 0.0}))).value();
  CHECK(std::isfinite(big.values[0]));
  CHECK(big.values[0] == doctest::Approx(1.0));
  CHECK(big.values[1] < 1e-300);

  const auto s = softmax(tape.constant(Tensor({3}, {1.0, 2.0, 3.0}))).value();
  const auto oracle = softmax_oracle({1.0L, 2.0L, 3.0L});
  for (int i = 0; i < 3; ++i) CHECK(std::abs(s.values[i] - static_cast<double>(oracle[i])) <= 1e-12);

  CHECK_THROWS_AS(softmax(tape.constant(Tensor({2}, {NAN, 0.0}))), NumericalError);
  CHECK_THROWS_AS(softmax(tape.constant(Tensor({2}, {INFINITY, 0.0}))), NumericalError);
}

TEST_CASE("softmax rows sum to one with entries in (0, 1)") {
  Rng rng(2);
  Tape tape(false);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(6);
    const auto p = softmax(tape.constant(random_tensor({3, n}, rng, -20.0, 20.0))).value();
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double v = p.values[r * n + j];
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("layer_norm examples") {
  Tape tape(false);
  const Var gain = tape.constant(Tensor({4}, 1.0));
  const Var zero = tape.constant(Tensor({4}, 0.0));
  const auto c = layer_norm(tape.constant(Tensor({1, 4}, 3.25)), gain, zero).value();
  for (double v : c.values) CHECK(v == 0.0);

  Rng rng(3);
  const Tensor bias = random_tensor({4}, rng);
  const Tensor x = random_tensor({5, 4}, rng, -3.0, 3.0);
  const auto y = layer_norm(tape.constant(x), gain, tape.constant(bias)).value();
  for (std::size_t r = 0; r < 5; ++r) {
    double mean_out = 0, mean_bias = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      mean_out += y.values[r * 4 + j] / 4;
      mean_bias += bias.values[j] / 4;
    }
    CHECK(std::abs(mean_out - mean_bias) <= 1e-9);
  }

  const Tensor g = random_tensor({4}, rng, 0.5, 1.5);
  const auto z = layer_norm(tape.constant(x), tape.constant(g), tape.constant(bias)).value();
  for (std::size_t r = 0; r < 5; ++r) {
    long double m = 0, var = 0;
    for (std::size_t j = 0; j < 4; ++j) m += x.values[r * 4 + j];
    m /= 4;
    for (std::size_t j = 0; j < 4; ++j) var += (x.values[r * 4 + j] - m) * (x.values[r * 4 + j] - m);
    var /= 4;
    for (std::size_t j = 0; j < 4; ++j) {
      const long double expect = (x.values[r * 4 + j] - m) / std::sqrt(var + 1e-5L) * g.values[j] + bias.values[j];
      CHECK(std::abs(z.values[r * 4 + j] - static_cast<double>(expect)) <= 1e-12);
    }
  }
}

TEST_CASE("gelu uses the erf form") {
  Tape tape(false);
  const std::vector<double> xs = {-3.0, -0.5, 0.0, 0.7, 2.5};
  const auto y = gelu(tape.constant(Tensor({5}, xs))).value();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CHECK(y.values[i] == doctest::Approx(0.5 * xs[i] * (1.0 + std::erf(xs[i] / std::sqrt(2.0)))).epsilon(1e-14));
  }
}

TEST_CASE("scaled_dot_attention examples") {
  Rng rng(4);
  Tape tape(false);
  const Tensor q1 = random_tensor({2, 1, 3}, rng), k1 = random_tensor({2, 1, 3}, rng), v1 = random_tensor({2, 1, 3}, rng);
  const std::vector<int> one = {1};
  const auto single = scaled_dot_attention(tape.constant(q1), tape.constant(k1), tape.constant(v1), one).value();
  for (std::size_t i = 0; i < v1.size(); ++i) CHECK(single.values[i] == doctest::Approx(v1.values[i]).epsilon(1e-15));

  const Tensor q = random_tensor({1, 4, 3}, rng), k = random_tensor({1, 4, 3}, rng), v = random_tensor({1, 4, 3}, rng);
  const std::vector<int> only_two = {0, 0, 1, 0};
  const auto forced = scaled_dot_attention(tape.constant(q), tape.constant(k), tape.constant(v), only_two).value();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(forced.values[i * 3 + j] == doctest::Approx(v.values[2 * 3 + j]));
  }

  // Equal scores: uniform over the unpadded keys.
  const Tensor zeros({1, 4, 3}, 0.0);
  const std::vector<int> mask = {1, 1, 1, 0};
  const auto uniform = scaled_dot_attention(tape.constant(zeros), tape.constant(k), tape.constant(v), mask).value();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double expect = (v.values[j] + v.values[3 + j] + v.values[6 + j]) / 3.0;
      CHECK(std::abs(uniform.values[i * 3 + j] - expect) <= 1e-15);
    }
  }
}

TEST_CASE("scaled_dot_attention matches a naive loop") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t g = 1 + rng.below(3), l = 1 + rng.below(5), d = 1 + rng.below(4);
    const Tensor q = random_tensor({g, l, d}, rng, -2, 2), k = random_tensor({g, l, d}, rng, -2, 2),
                 v = random_tensor({g, l, d}, rng, -2, 2);
    std::vector<int> mask(g * l);
    for (auto& m : mask) m = rng.uniform() < 0.7 ? 1 : 0;
    for (std::size_t gi = 0; gi < g; ++gi) mask[gi * l] = 1;
    Tape tape(false);
    const auto out = scaled_dot_attention(tape.constant(q), tape.constant(k), tape.constant(v), mask).value();
    for (std::size_t gi = 0; gi < g; ++gi) {
      for (std::size_t i = 0; i < l; ++i) {
        std::vector<long double> scores(l);
        for (std::size_t j = 0; j < l; ++j) {
          long double s = 0;
          for (std::size_t c = 0; c < d; ++c) s += q.values[(gi * l + i) * d + c] * k.values[(gi * l + j) * d + c];
          scores[j] = s / std::sqrt(static_cast<long double>(d)) + (mask[gi * l + j] ? 0.0L : -1e9L);
        }
        const auto p = softmax_oracle(scores);
        for (std::size_t c = 0; c < d; ++c) {
          long double o = 0;
          for (std::size_t j = 0; j < l; ++j) o += p[j] * v.values[(gi * l + j) * d + c];
          CHECK(std::abs(out.values[(gi * l + i) * d + c] - static_cast<double>(o)) <= 1e-10);
        }
      }
    }
  }
}

TEST_CASE("gradient_check on a quadratic") {
  Rng rng(6);
  Tensor theta = random_tensor({7}, rng, -3, 3);
  ScalarObjective f = [&](Tape& tape) {
    Var t = tape.parameter(theta);
    return sum(mul(t, t));
  };
  Tensor* params[] = {&theta};
  const auto r = gradient_check(f, params);
  CHECK(r.passed);
  CHECK(r.max_rel_error < 1e-8);
  CHECK(r.coords_checked == 7);
  for (std::size_t i = 0; i < 7; ++i) CHECK(theta.grad[i] == doctest::Approx(2 * theta.values[i]));

  GradCheckOptions corrupt;
  corrupt.analytic_scale = 1.01;
  const auto bad = gradient_check(f, params, corrupt);
  CHECK_FALSE(bad.passed);
  CHECK(bad.max_rel_error == doctest::Approx(0.01 / 1.01).epsilon(1e-4));

  GradCheckOptions sampled;
  sampled.max_coords_per_tensor = 3;
  CHECK(gradient_check(f, params, sampled).coords_checked == 3);

  GradCheckOptions bad_h;
  bad_h.h = 1e-2;
  CHECK_THROWS_AS(gradient_check(f, params, bad_h), ContractError);
  bad_h.h = 1e-8;
  CHECK_THROWS_AS(gradient_check(f, params, bad_h), ContractError);

  ScalarObjective nan_f = [&](Tape& tape) { return scale(sum(tape.parameter(theta)), NAN); };
  CHECK_THROWS_AS(gradient_check(nan_f, params), NumericalError);
}

TEST_CASE("every primitive's backward matches central differences") {
  Rng rng(7);
  auto run = [&](const char* name, std::vector<Tensor> inputs, const std::function<Var(std::span<const Var>)>& op) {
    CAPTURE(name);
    const auto r = check_op(inputs, op);
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-6);
  };
  run("matmul", {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
      [](auto v) { return matmul(v[0], v[1]); });
  run("matmul shared", {random_tensor({2, 3, 4}, rng), random_tensor({4, 2}, rng)},
      [](auto v) { return matmul(v[0], v[1]); });
  run("matmul batched", {random_tensor({2, 3, 4}, rng), random_tensor({2, 4, 2}, rng)},
      [](auto v) { return matmul(v[0], v[1]); });
  run("matmul transposed", {random_tensor({2, 3, 4}, rng), random_tensor({2, 5, 4}, rng)},
      [](auto v) { return matmul(v[0], v[1], true); });
  run("add", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, [](auto v) { return add(v[0], v[1]); });
  run("add broadcast", {random_tensor({3, 4}, rng), random_tensor({4}, rng)}, [](auto v) { return add(v[0], v[1]); });
  run("mul", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}, [](auto v) { return mul(v[0], v[1]); });
  run("scale", {random_tensor({5}, rng)}, [](auto v) { return scale(v[0], -2.5); });
  run("sum", {random_tensor({2, 3}, rng)}, [](auto v) { return sum(v[0]); });
  run("gather_rows", {random_tensor({5, 3}, rng)}, [](auto v) { return gather_rows(v[0], {4, 0, 4, 2}); });
  run("softmax", {random_tensor({3, 4}, rng, -3, 3)}, [](auto v) { return softmax(v[0]); });
  run("layer_norm", {random_tensor({3, 5}, rng, -2, 2), random_tensor({5}, rng, 0.5, 1.5), random_tensor({5}, rng)},
      [](auto v) { return layer_norm(v[0], v[1], v[2]); });
  run("gelu", {random_tensor({3, 4}, rng, -3, 3)}, [](auto v) { return gelu(v[0]); });
  run("relu", {random_tensor({3, 4}, rng, 0.1, 1.0)}, [](auto v) { return relu(scale(v[0], -1.0)); });
  run("relu positive", {random_tensor({3, 4}, rng, 0.1, 1.0)}, [](auto v) { return relu(v[0]); });
  run("concat_last", {random_tensor({3, 2}, rng), random_tensor({3, 3}, rng)}, [](auto v) {
    std::vector<Var> parts(v.begin(), v.end());
    return concat_last(parts);
  });
  run("slice_last", {random_tensor({3, 6}, rng)}, [](auto v) { return slice_last(v[0], 1, 4); });
  run("slice_rows", {random_tensor({5, 2}, rng)}, [](auto v) { return slice_rows(v[0], 1, 4); });
  run("reshape", {random_tensor({2, 6}, rng)}, [](auto v) { return reshape(v[0], {3, 4}); });
  run("dropout", {random_tensor({4, 5}, rng)}, [](auto v) {
    Rng mask_rng(13);
    return dropout(v[0], 0.4, mask_rng);
  });
  const std::vector<int> mask = {1, 1, 0, 1, 1, 1, 1, 0};
  run("attention", {random_tensor({2, 4, 3}, rng), random_tensor({2, 4, 3}, rng), random_tensor({2, 4, 3}, rng)},
      [&](auto v) { return scaled_dot_attention(v[0], v[1], v[2], mask); });
}

TEST_CASE("dropout masks are seeded and inverted") {
  Tape tape(false);
  const Tensor x({1000}, 1.0);
  const Var vx = tape.constant(x);
  Rng r0(1);
  CHECK(dropout(vx, 0.0, r0).id() == vx.id());
  Rng r1(5), r2(5);
  const auto a = dropout(vx, 0.25, r1).value();
  const auto b = dropout(vx, 0.25, r2).value();
  CHECK(a.values == b.values);
  std::size_t kept = 0;
  for (double v : a.values) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    kept += v != 0.0;
  }
  CHECK(kept > 700);
  CHECK(kept < 800);
}

TEST_CASE("zero upstream gradient leaves parameter gradients zero") {
  Rng rng(8);
  Tensor w = random_tensor({3, 3}, rng);
  w.set_requires_grad(true);
  Tape tape;
  const Var x = tape.constant(random_tensor({2, 3}, rng));
  const Var y = softmax(matmul(x, tape.parameter(w)));
  const std::vector<double> seed(y.value().size(), 0.0);
  tape.backward(y, seed);
  for (double g : w.grad) CHECK(g == 0.0);
}

TEST_CASE("tape records in topological order and guards misuse") {
  Rng rng(9);
  Tensor w = random_tensor({2, 2}, rng);
  Tape tape;
  const Var a = tape.parameter(w);
  const Var b = matmul(a, a);
  const Var c = sum(b);
  CHECK(a.id() < b.id());
  CHECK(b.id() < c.id());
  CHECK_THROWS_AS(tape.backward(b), ContractError);

  Tape other;
  CHECK_THROWS_AS(add(a, other.constant(w)), ContractError);
  Tape eval(false);
  const Var e = sum(eval.constant(w));
  CHECK_THROWS_AS(eval.backward(e), ContractError);
}

TEST_CASE("read-only parameters receive no gradient") {
  Rng rng(10);
  Tensor w = random_tensor({2, 2}, rng);
  w.set_requires_grad(true);
  const Tensor& cw = w;
  Tape tape;
  tape.backward(sum(mul(tape.parameter(cw), tape.parameter(cw))));
  for (double g : w.grad) CHECK(g == 0.0);
}
