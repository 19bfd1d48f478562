#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "ngdlab/data.hpp"
#include "ngdlab/objective.hpp"
#include "oracles.hpp"

using namespace ngd;

namespace {

Dataset planted(int n, int d, double gamma, uint64_t seed) {
  GenSpec spec;
  spec.kind = GenKind::PlantedMarginLinear;
  spec.n = n;
  spec.d = d;
  spec.gamma = gamma;
  spec.seed = seed;
  return generate(spec);
}

Objective seeded_objective(LossKind loss, const Activation& act, int m, int n, int d,
                           uint64_t seed) {
  NetSpec net{m, act, SignScheme::Random, seed};
  return net.bind(loss, planted(n, d, 0.1, seed + 1));
}

Mat random_weights(int m, int d, double radius, Rng& rng) {
  Mat w(m, d);
  w.a = rng.normal_vec(m * d);
  double nw = norm2(w.a);
  scale(w.a, radius / nw);
  return w;
}

const Activation kSmooth = Activation::smoothed_leaky_relu(0.2, 1.0, 4.0);
const Activation kLeaky = Activation::leaky_relu(0.2, 1.0);

}  // namespace

TEST_CASE("loss at zero weights: exponential 1, logistic log 2 (leaky net)") {
  Objective exp_obj = seeded_objective(LossKind::Exponential, kLeaky, 4, 12, 3, 5);
  Objective log_obj = seeded_objective(LossKind::Logistic, kLeaky, 4, 12, 3, 5);
  Mat zero(4, 3, 0.0);
  CHECK(exp_obj.loss_eval(zero) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(log_obj.loss_eval(zero) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  // Phi == 0 scores as an error for every label
  CHECK(exp_obj.train_error(zero) == 1.0);
}

TEST_CASE("loss matches the straight-line oracle") {
  for (LossKind loss : {LossKind::Exponential, LossKind::Logistic}) {
    Objective obj = seeded_objective(loss, kSmooth, 5, 20, 4, 9);
    Rng rng(10);
    for (int trial = 0; trial < 5; ++trial) {
      Mat w = random_weights(5, 4, 1.0 + trial, rng);
      CHECK(obj.loss_eval(w) == doctest::Approx(oracle::naive_loss(obj, w)).epsilon(1e-12));
    }
  }
}

TEST_CASE("gradient vanishes as all margins grow") {
  // One aligned direction classifies everything; scaling it up kills f'.
  Dataset data = planted(30, 6, 0.2, 3);
  NetSpec net{4, kSmooth, SignScheme::Random, 4};
  Objective obj = net.bind(LossKind::Exponential, data);
  Vec w_star = resolve_separator([&] {
    GenSpec s;
    s.kind = GenKind::PlantedMarginLinear;
    s.n = 30;
    s.d = 6;
    s.gamma = 0.2;
    s.seed = 3;
    return s;
  }());
  Mat w(4, 6);
  for (int j = 0; j < 4; ++j) {
    double sgn = obj.second_layer()[j] > 0 ? 1.0 : -1.0;
    for (int k = 0; k < 6; ++k) w(j, k) = 4000.0 * sgn * w_star[k];
  }
  CHECK(norm2(obj.loss_grad(w)) <= 1e-12);
}

TEST_CASE("analytic gradient agrees with central differences at 20 seeded points") {
  Objective obj = seeded_objective(LossKind::Exponential, kSmooth, 4, 15, 3, 21);
  Objective lobj = seeded_objective(LossKind::Logistic, kSmooth, 4, 15, 3, 21);
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    Mat w = random_weights(4, 3, 0.5 + 0.2 * trial, rng);
    const Objective& o = trial % 2 == 0 ? obj : lobj;
    auto f = [&](const Vec& flat) {
      Mat wm(4, 3);
      wm.a = flat;
      return o.loss_eval(wm);
    };
    Vec want = fd_gradient(f, w.a, 1e-5);
    Vec got = o.loss_grad(w);
    CHECK(oracle::rel_err(got, want) <= 1e-5);
  }
}

TEST_CASE("self-bounded gradient: ||grad F|| <= (ell R / sqrt m) F everywhere sampled") {
  Objective obj = seeded_objective(LossKind::Exponential, kSmooth, 6, 25, 5, 31);
  double h = kSmooth.ell() * obj.data().radius / std::sqrt(6.0);
  Rng rng(32);
  for (double radius : {0.1, 1.0, 10.0}) {
    for (int trial = 0; trial < 20; ++trial) {
      Mat w = random_weights(6, 5, radius, rng);
      double f = obj.loss_eval(w);
      CHECK(norm2(obj.loss_grad(w)) / f <= h + 1e-9);
    }
  }
}

TEST_CASE("self lower bound with planted margin: ||grad F|| >= (alpha gamma / sqrt m) F") {
  Dataset data = planted(40, 8, 0.25, 51);
  NetSpec net{6, kSmooth, SignScheme::Random, 52};
  Objective obj = net.bind(LossKind::Exponential, data);
  double mu = kSmooth.alpha() * 0.25 / std::sqrt(6.0);
  Rng rng(53);
  for (double radius : {0.1, 1.0, 10.0}) {
    for (int trial = 0; trial < 20; ++trial) {
      Mat w = random_weights(6, 8, radius, rng);
      double f = obj.loss_eval(w);
      CHECK(norm2(obj.loss_grad(w)) >= mu * f - 1e-9);
    }
  }
}

TEST_CASE("leaky-relu nets with positive network margin: ||grad F|| >= margin * F") {
  // Any point whose network margin is positive certifies its own mu.
  Dataset data = planted(30, 5, 0.2, 61);
  NetSpec net{4, kLeaky, SignScheme::Random, 62};
  Objective obj = net.bind(LossKind::Exponential, data);
  Rng rng(63);
  int found = 0;
  for (int trial = 0; trial < 400 && found < 10; ++trial) {
    Mat w = random_weights(4, 5, 1.0 + (trial % 5), rng);
    double gh = obj.network_margin(w);
    if (gh <= 0.0) continue;
    ++found;
    double f = obj.loss_eval(w);
    CHECK(norm2(obj.loss_grad(w)) >= gh * f - 1e-9);
  }
  CHECK(found > 0);
}

TEST_CASE("hessian-vector product: zero direction, symmetry, FD agreement, ratio bound") {
  Objective obj = seeded_objective(LossKind::Exponential, kSmooth, 4, 12, 3, 71);
  Rng rng(72);
  Mat w = random_weights(4, 3, 1.0, rng);

  Vec zero(12, 0.0);
  for (double v : obj.loss_hvp(w, zero)) CHECK(v == 0.0);

  HessianOperator hess(obj, w);
  for (int trial = 0; trial < 10; ++trial) {
    Vec u = rng.normal_vec(12), v = rng.normal_vec(12);
    double a = dot(u, hess.apply(v));
    double b = dot(v, hess.apply(u));
    CHECK(std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(a)));
  }

  for (int trial = 0; trial < 5; ++trial) {
    Mat wp = random_weights(4, 3, 0.8 + 0.3 * trial, rng);
    Vec dir = rng.normal_vec(12);
    auto grad_at = [&](const Mat& wm) { return obj.loss_grad(wm); };
    Vec want = oracle::fd_hvp(grad_at, wp, dir, 1e-5);
    Vec got = obj.loss_hvp(wp, dir);
    CHECK(oracle::rel_err(got, want) <= 1e-4);
  }

  // op-norm ratio stays below the differentiation-derived constant
  double R = obj.data().radius;
  double H_impl = kSmooth.curvature_bound() * R * R / 4.0 + kSmooth.ell() * kSmooth.ell() * R * R / 4.0;
  for (double radius : {0.1, 1.0, 10.0}) {
    Mat wp = random_weights(4, 3, radius, rng);
    HessianOperator hop(obj, wp);
    auto apply = [&](const Vec& v, Vec& y) { hop.apply(v, y); };
    Rng prng(73);
    PowerIterResult pi = power_iteration(apply, 12, 1e-8, 5000, prng);
    REQUIRE(pi.converged);
    CHECK(pi.value / obj.loss_eval(wp) <= H_impl * (1.0 + 1e-6));
  }

  // logistic-loss Hessian agrees with FD too
  Objective lobj = seeded_objective(LossKind::Logistic, kSmooth, 4, 12, 3, 71);
  Vec dir = rng.normal_vec(12);
  Vec want = oracle::fd_hvp([&](const Mat& wm) { return lobj.loss_grad(wm); }, w, dir, 1e-5);
  CHECK(oracle::rel_err(lobj.loss_hvp(w, dir), want) <= 1e-4);

  Objective leaky_obj = seeded_objective(LossKind::Exponential, kLeaky, 4, 12, 3, 71);
  CHECK_THROWS_AS(leaky_obj.loss_hvp(w, dir), std::domain_error);
}

TEST_CASE("power iteration on the loss Hessian matches a dense FD eigendecomposition") {
  // 2-neuron net on 3 points: small enough to materialize densely.
  Objective obj = seeded_objective(LossKind::Exponential, kSmooth, 2, 3, 3, 81);
  Rng rng(82);
  Mat w = random_weights(2, 3, 1.0, rng);
  Mat dense = oracle::fd_dense_hessian(obj, w, 1e-5);
  double want = oracle::jacobi_opnorm(dense);
  HessianOperator hess(obj, w);
  auto apply = [&](const Vec& v, Vec& y) { hess.apply(v, y); };
  PowerIterResult pi = power_iteration(apply, 6, 1e-10, 20000, rng);
  REQUIRE(pi.converged);
  CHECK(std::abs(pi.value - want) <= 1e-6 * want);
}

TEST_CASE("logistic loss is (ell R / sqrt m)-Lipschitz in w") {
  Objective obj = seeded_objective(LossKind::Logistic, kSmooth, 5, 18, 4, 91);
  double lip = kSmooth.ell() * obj.data().radius / std::sqrt(5.0);
  Rng rng(92);
  for (int trial = 0; trial < 50; ++trial) {
    Mat w = random_weights(5, 4, 0.5 + trial * 0.1, rng);
    Mat v = random_weights(5, 4, 0.5 + trial * 0.07, rng);
    double dw = 0.0;
    for (size_t i = 0; i < w.a.size(); ++i) {
      double d = w.a[i] - v.a[i];
      dw += d * d;
    }
    dw = std::sqrt(dw);
    CHECK(std::abs(obj.loss_eval(w) - obj.loss_eval(v)) <= lip * dw + 1e-12);
  }
}

TEST_CASE("train_error counts Phi = 0 as wrong and matches a direct scan") {
  Objective obj = seeded_objective(LossKind::Exponential, kSmooth, 4, 25, 3, 101);
  Rng rng(102);
  Mat w = random_weights(4, 3, 2.0, rng);
  Vec marg = obj.margins(w);
  int errs = 0;
  for (double mi : marg) errs += !(mi > 0.0);
  CHECK(obj.train_error(w) == doctest::Approx(static_cast<double>(errs) / 25.0));
}

TEST_CASE("network margin: scale invariance, sign, and brute-force agreement") {
  // m = 1, linear activation, data {(1, +1), (-1, -1)}: margin 1 at any scale.
  Mat x(2, 1);
  x(0, 0) = 1.0;
  x(1, 0) = -1.0;
  Dataset data = Dataset::from_xy(x, {1.0, -1.0});
  Activation linear = Activation::leaky_relu(1.0, 1.0);
  Objective obj(LossKind::Exponential, linear, {1.0}, data);
  Mat w(1, 1, 2.0);
  CHECK(obj.network_margin(w) == doctest::Approx(1.0));
  Mat w2(1, 1, 0.001);
  CHECK(obj.network_margin(w2) == doctest::Approx(1.0));
  Mat wneg(1, 1, -3.0);
  CHECK(obj.network_margin(wneg) == doctest::Approx(-1.0));  // non-separating
  CHECK_THROWS_AS(obj.network_margin(Mat(1, 1, 0.0)), std::invalid_argument);

  Objective sobj = seeded_objective(LossKind::Exponential, kSmooth, 4, 20, 3, 111);
  Rng rng(112);
  Mat ws = random_weights(4, 3, 1.5, rng);
  Vec marg = sobj.margins(ws);
  double lo = marg[0];
  for (double mi : marg) lo = std::min(lo, mi);
  CHECK(sobj.network_margin(ws) == doctest::Approx(lo / frobenius_norm(ws)));
}

TEST_CASE("linear margin on a planted dataset meets its target") {
  GenSpec spec;
  spec.kind = GenKind::PlantedMarginLinear;
  spec.n = 60;
  spec.d = 6;
  spec.gamma = 0.3;
  spec.seed = 121;
  Dataset data = generate(spec);
  CHECK(linear_margin(data, resolve_separator(spec)) >= 0.3);
  CHECK_THROWS_AS(linear_margin(data, Vec(6, 0.0)), std::invalid_argument);
}

TEST_CASE("log-space evaluation survives margins far beyond exp overflow") {
  Mat x(2, 1);
  x(0, 0) = 1.0;
  x(1, 0) = 0.5;
  Dataset data = Dataset::from_xy(x, {1.0, 1.0});
  Activation linear = Activation::leaky_relu(1.0, 1.0);
  Objective obj(LossKind::Exponential, linear, {1.0}, data);

  Mat wpos(1, 1, 2000.0);  // margins +2000, +1000: F underflows cleanly
  CHECK(obj.loss_eval(wpos) == 0.0);
  CHECK(obj.log_loss(wpos) == doctest::Approx(-1000.0 - std::log(2.0)).epsilon(1e-12));

  Mat wneg(1, 1, -2000.0);  // margins -1000, -2000: F overflows, log F is fine
  CHECK(obj.log_loss(wneg) == doctest::Approx(2000.0 - std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(obj.loss_eval(wneg), std::overflow_error);
}

TEST_CASE("loss kind constants") {
  CHECK(loss_lipschitz(LossKind::Logistic) == 1.0);
  CHECK(loss_smoothness(LossKind::Logistic) == 0.25);
  CHECK_THROWS_AS(loss_lipschitz(LossKind::Exponential), std::domain_error);
  CHECK_THROWS_AS(loss_smoothness(LossKind::Exponential), std::domain_error);
}
