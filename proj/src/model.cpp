#include "ngdlab/model.hpp"

#include <cmath>
#include <stdexcept>

namespace ngd {

Vec second_layer_signs(int m, SignScheme scheme, Rng& rng) {
  if (m <= 0) throw std::invalid_argument("second_layer_signs: m must be positive");
  Vec a(m);
  double mag = 1.0 / static_cast<double>(m);
  for (int j = 0; j < m; ++j) {
    bool plus = scheme == SignScheme::Balanced ? (j % 2 == 0) : (rng.uniform01() < 0.5);
    a[j] = plus ? mag : -mag;
  }
  return a;
}

Mat init_weights(int m, int d, InitKind kind, Rng& rng) {
  Mat w(m, d, 0.0);
  if (kind == InitKind::Zero) return w;
  for (int j = 0; j < m; ++j) {
    double* row = w.row(j);
    double n2 = 0.0;
    do {
      for (int k = 0; k < d; ++k) row[k] = rng.normal();
      n2 = norm2(row, d);
    } while (n2 == 0.0);
    for (int k = 0; k < d; ++k) row[k] /= n2;
  }
  return w;
}

TwoLayerNet::TwoLayerNet(Mat w, Vec a_in, Activation activation)
    : W(std::move(w)), a(std::move(a_in)), act(activation) {
  if (static_cast<int>(a.size()) != W.rows) {
    throw std::invalid_argument("TwoLayerNet: sign vector length must equal row count");
  }
  double mag = 1.0 / static_cast<double>(W.rows);
  for (double aj : a) {
    if (std::abs(std::abs(aj) - mag) > 1e-15 * mag) {
      throw std::invalid_argument("TwoLayerNet: second-layer weights must be +-1/m");
    }
  }
  require_finite(W, "TwoLayerNet weights");
}

double forward(const TwoLayerNet& net, const Vec& x) {
  if (static_cast<int>(x.size()) != net.d()) {
    throw std::invalid_argument("forward: input dimension mismatch");
  }
  double phi = 0.0;
  for (int j = 0; j < net.m(); ++j) {
    double u = dot(net.W.row(j), x.data(), net.d());
    phi += net.a[j] * net.act.value(u);
  }
  return phi;
}

Vec grad_phi(const TwoLayerNet& net, const Vec& x) {
  if (static_cast<int>(x.size()) != net.d()) {
    throw std::invalid_argument("grad_phi: input dimension mismatch");
  }
  int m = net.m(), d = net.d();
  Vec g(static_cast<size_t>(m) * d, 0.0);
  for (int j = 0; j < m; ++j) {
    double u = dot(net.W.row(j), x.data(), d);
    double c = net.a[j] * net.act.d1(u);
    axpy(c, x.data(), g.data() + static_cast<size_t>(j) * d, d);
  }
  return g;
}

Vec hvp_phi(const TwoLayerNet& net, const Vec& x, const Vec& v) {
  if (!net.act.smooth()) {
    throw std::domain_error("hvp_phi: Hessian undefined for leaky-relu activation");
  }
  int m = net.m(), d = net.d();
  if (static_cast<int>(x.size()) != d) {
    throw std::invalid_argument("hvp_phi: input dimension mismatch");
  }
  if (v.size() != static_cast<size_t>(m) * d) {
    throw std::invalid_argument("hvp_phi: direction dimension mismatch");
  }
  Vec out(static_cast<size_t>(m) * d, 0.0);
  for (int j = 0; j < m; ++j) {
    double u = dot(net.W.row(j), x.data(), d);
    ActEval e = net.act.eval(u);
    double xv = dot(x.data(), v.data() + static_cast<size_t>(j) * d, d);
    axpy(net.a[j] * e.d2 * xv, x.data(), out.data() + static_cast<size_t>(j) * d, d);
  }
  return out;
}

}  // namespace ngd
