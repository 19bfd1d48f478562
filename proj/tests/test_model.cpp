#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "ngdlab/model.hpp"
#include "ngdlab/numerics.hpp"
#include "oracles.hpp"

using namespace ngd;

namespace {

TwoLayerNet seeded_net(int m, int d, const Activation& act, uint64_t seed) {
  Rng rng(seed);
  Vec a = second_layer_signs(m, SignScheme::Random, rng);
  Mat w = init_weights(m, d, InitKind::GaussianRowNormalized, rng);
  return TwoLayerNet(std::move(w), std::move(a), act);
}

}  // namespace

TEST_CASE("leaky-relu evaluation on both branches") {
  Activation act = Activation::leaky_relu(0.2, 1.0);
  ActEval e = act.eval(-2.0);
  CHECK(e.value == doctest::Approx(-0.4));
  CHECK(e.d1 == doctest::Approx(0.2));
  CHECK(e.d2 == 0.0);
  ActEval p = act.eval(3.0);
  CHECK(p.value == doctest::Approx(3.0));
  CHECK(p.d1 == doctest::Approx(1.0));
  // t = 0 takes the ell branch for value/slope, and has no curvature
  double v, d1;
  act.value_d1(0.0, v, d1);
  CHECK(v == 0.0);
  CHECK(d1 == doctest::Approx(1.0));
  CHECK_THROWS_AS(act.eval(0.0), std::domain_error);
}

TEST_CASE("smoothed activation at zero is softplus-shaped") {
  Activation act = Activation::smoothed_leaky_relu(0.0, 1.0, 1.0);
  ActEval e = act.eval(0.0);
  CHECK(e.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(e.d1 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(e.d2 == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("smoothed curvature stays below (ell - alpha) s / 4 on a dense grid") {
  Activation act = Activation::smoothed_leaky_relu(0.2, 1.0, 4.0);
  double bound = act.curvature_bound();
  CHECK(bound == doctest::Approx(0.8));
  double sup = 0.0;
  for (double t = -50.0; t <= 50.0; t += 1e-3) {
    sup = std::max(sup, std::abs(act.eval(t).d2));
  }
  CHECK(sup <= bound + 1e-12);
  CHECK(sup == doctest::Approx(bound).epsilon(1e-6));  // attained near 0
}

TEST_CASE("smoothed slope is pinned to [alpha, ell] at extreme arguments") {
  Activation act = Activation::smoothed_leaky_relu(0.3, 1.7, 2.5);
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    double t = rng.normal() * 200.0;
    double d1 = act.d1(t);
    CHECK(d1 >= 0.3);
    CHECK(d1 <= 1.7);
  }
  CHECK(act.d1(1e6) == doctest::Approx(1.7));
  CHECK(act.d1(-1e6) == doctest::Approx(0.3));
  // overflow-safe values at huge arguments
  CHECK(std::isfinite(act.value(700.0)));
  CHECK(std::isfinite(act.value(-700.0)));
}

TEST_CASE("forward: zero weights, linear unit, and oracle agreement") {
  Activation leaky = Activation::leaky_relu(0.2, 1.0);
  Rng rng(3);
  Vec a = second_layer_signs(4, SignScheme::Random, rng);
  TwoLayerNet net(Mat(4, 3, 0.0), a, leaky);
  CHECK(forward(net, {0.3, -2.0, 5.0}) == 0.0);

  // m = 1 makes a_1 = +-1; a linear activation turns Phi into +-<w, x>.
  Activation linear = Activation::leaky_relu(1.0, 1.0);
  TwoLayerNet pos(Mat(1, 1, 3.0), Vec{1.0}, linear);
  TwoLayerNet neg(Mat(1, 1, 3.0), Vec{-1.0}, linear);
  CHECK(forward(pos, {2.0}) == doctest::Approx(6.0));
  CHECK(forward(neg, {2.0}) == doctest::Approx(-6.0));

  Activation smooth = Activation::smoothed_leaky_relu(0.2, 1.0, 4.0);
  TwoLayerNet net2 = seeded_net(4, 3, smooth, 17);
  Rng xr(18);
  for (int i = 0; i < 10; ++i) {
    Vec x = xr.normal_vec(3);
    double want = oracle::naive_forward(net2.W, net2.a, smooth, x);
    CHECK(forward(net2, x) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("forward rejects dimension mismatches") {
  TwoLayerNet net = seeded_net(2, 3, Activation::leaky_relu(0.2, 1.0), 1);
  CHECK_THROWS_AS(forward(net, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(grad_phi(net, {1.0}), std::invalid_argument);
}

TEST_CASE("grad_phi: linear case returns x, norm bound holds, FD agrees") {
  Activation linear = Activation::leaky_relu(1.0, 1.0);
  TwoLayerNet unit(Mat(1, 3, 0.5), Vec{1.0}, linear);
  Vec x = {1.0, -2.0, 0.25};
  Vec g = grad_phi(unit, x);
  for (int k = 0; k < 3; ++k) CHECK(g[k] == doctest::Approx(x[k]));

  Activation smooth = Activation::smoothed_leaky_relu(0.2, 1.0, 4.0);
  Rng xr(99);
  for (uint64_t seed = 0; seed < 5; ++seed) {
    TwoLayerNet net = seeded_net(6, 4, smooth, seed + 30);
    Vec xx = xr.normal_vec(4);
    Vec gg = grad_phi(net, xx);
    CHECK(norm2(gg) <= smooth.ell() * norm2(xx) / std::sqrt(6.0) + 1e-12);
  }

  // FD oracle at 20 seeded points
  TwoLayerNet net = seeded_net(5, 3, smooth, 77);
  Rng rng(78);
  for (int trial = 0; trial < 20; ++trial) {
    Vec xx = rng.normal_vec(3);
    Mat w0 = net.W;
    for (double& v : w0.a) v += 0.3 * rng.normal();
    TwoLayerNet probe(w0, net.a, smooth);
    auto f = [&](const Vec& flat) {
      Mat wm(5, 3);
      wm.a = flat;
      TwoLayerNet p2(wm, net.a, smooth);
      return forward(p2, xx);
    };
    Vec want = fd_gradient(f, w0.a, 1e-5);
    Vec got = grad_phi(probe, xx);
    CHECK(oracle::rel_err(got, want) <= 1e-6);
  }
}

TEST_CASE("hvp_phi: structure, symmetry, FD agreement, operator norm") {
  Activation smooth = Activation::smoothed_leaky_relu(0.2, 1.0, 4.0);

  // linear activation (alpha = ell) has zero curvature
  Activation lin = Activation::smoothed_leaky_relu(1.0, 1.0, 2.0);
  TwoLayerNet linnet = seeded_net(3, 2, lin, 5);
  Rng rng(6);
  Vec v = rng.normal_vec(6);
  for (double h : hvp_phi(linnet, rng.normal_vec(2), v)) CHECK(h == 0.0);

  TwoLayerNet net = seeded_net(4, 3, smooth, 41);
  Vec x = rng.normal_vec(3);

  // block-diagonality: support stays on the perturbed block
  Vec vblock(12, 0.0);
  vblock[3 + 0] = 1.0;
  vblock[3 + 2] = -0.5;
  Vec out = hvp_phi(net, x, vblock);
  for (int j = 0; j < 4; ++j) {
    double blocknorm = norm2(out.data() + 3 * j, 3);
    if (j == 1) continue;
    CHECK(blocknorm == 0.0);
  }

  // symmetry of the quadratic form
  for (int trial = 0; trial < 10; ++trial) {
    Vec u = rng.normal_vec(12), w = rng.normal_vec(12);
    double a = dot(u, hvp_phi(net, x, w));
    double b = dot(w, hvp_phi(net, x, u));
    CHECK(std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(a)));
  }

  // linearity in v
  {
    Vec u = rng.normal_vec(12), w = rng.normal_vec(12);
    Vec both(12);
    for (int i = 0; i < 12; ++i) both[i] = 2.0 * u[i] - 3.0 * w[i];
    Vec lhs = hvp_phi(net, x, both);
    Vec hu = hvp_phi(net, x, u), hw = hvp_phi(net, x, w);
    for (int i = 0; i < 12; ++i) {
      CHECK(lhs[i] == doctest::Approx(2.0 * hu[i] - 3.0 * hw[i]).epsilon(1e-10));
    }
  }

  // FD of grad_phi
  for (int trial = 0; trial < 5; ++trial) {
    Vec dir = rng.normal_vec(12);
    auto grad_at = [&](const Mat& wm) {
      TwoLayerNet p(wm, net.a, smooth);
      return grad_phi(p, x);
    };
    Vec want = oracle::fd_hvp(grad_at, net.W, dir, 1e-6);
    Vec got = hvp_phi(net, x, dir);
    CHECK(oracle::rel_err(got, want) <= 1e-5);
  }

  // operator norm bound L ||x||^2 / m via power iteration
  auto apply = [&](const Vec& vv, Vec& yy) { yy = hvp_phi(net, x, vv); };
  Rng prng(13);
  PowerIterResult pi = power_iteration(apply, 12, 1e-9, 5000, prng);
  REQUIRE(pi.converged);
  double bound = smooth.curvature_bound() * dot(x, x) / 4.0;
  CHECK(pi.value <= bound * (1.0 + 1e-9));

  // leaky activation is rejected
  TwoLayerNet lk = seeded_net(2, 2, Activation::leaky_relu(0.2, 1.0), 3);
  CHECK_THROWS_AS(hvp_phi(lk, {1.0, 1.0}, Vec(4, 0.0)), std::domain_error);
}

TEST_CASE("balanced signs cancel at zero weights for any activation") {
  Activation smooth = Activation::smoothed_leaky_relu(0.2, 1.0, 4.0);
  Rng rng(1);
  Vec a = second_layer_signs(6, SignScheme::Balanced, rng);
  TwoLayerNet net(Mat(6, 2, 0.0), a, smooth);
  CHECK(forward(net, {0.7, -0.1}) == doctest::Approx(0.0));
}

TEST_CASE("second-layer magnitude is enforced") {
  Rng rng(2);
  Vec bad = {0.5, -0.5, 0.5};  // should be +-1/3
  CHECK_THROWS_AS(TwoLayerNet(Mat(3, 2, 0.0), bad, Activation::leaky_relu(0.2, 1.0)),
                  std::invalid_argument);
}

TEST_CASE("gaussian-row-normalized init yields unit rows") {
  Rng rng(10);
  Mat w = init_weights(8, 5, InitKind::GaussianRowNormalized, rng);
  for (int j = 0; j < 8; ++j) CHECK(norm2(w.row(j), 5) == doctest::Approx(1.0).epsilon(1e-12));
}
