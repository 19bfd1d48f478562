#include "ngdlab/activation.hpp"

#include <cmath>
#include <stdexcept>

namespace ngd {

namespace {

// log(1 + exp(u)) without overflow. The linear asymptote above u = 30 is off
// by exp(-30) < 1e-13, below the accuracy anything downstream needs.
double softplus(double u) {
  if (u > 30.0) return u;
  if (u < -30.0) return std::exp(u);
  return std::log1p(std::exp(u));
}

double logistic(double u) {
  if (u >= 0.0) {
    double e = std::exp(-u);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(u);
  return e / (1.0 + e);
}

}  // namespace

Activation::Activation(ActKind kind, double alpha, double ell, double sharpness)
    : kind_(kind), alpha_(alpha), ell_(ell), sharpness_(sharpness) {
  if (!(alpha >= 0.0) || !(ell >= alpha)) {
    throw std::invalid_argument("activation: need 0 <= alpha <= ell");
  }
  if (kind == ActKind::SmoothedLeakyRelu && !(sharpness > 0.0)) {
    throw std::invalid_argument("activation: sharpness must be positive");
  }
}

Activation Activation::smoothed_leaky_relu(double alpha, double ell, double sharpness) {
  return Activation(ActKind::SmoothedLeakyRelu, alpha, ell, sharpness);
}

Activation Activation::leaky_relu(double alpha, double ell) {
  return Activation(ActKind::LeakyRelu, alpha, ell, 0.0);
}

double Activation::curvature_bound() const {
  if (!smooth()) {
    throw std::domain_error("curvature_bound: undefined for leaky-relu");
  }
  return (ell_ - alpha_) * sharpness_ / 4.0;
}

// Smoothed kind: sigma(t) = alpha t + ((ell - alpha) / s) softplus(s t),
// so sigma' = alpha + (ell - alpha) logistic(s t) in (alpha, ell) and
// sigma'' = (ell - alpha) s p (1 - p) peaking at (ell - alpha) s / 4.
double Activation::value(double t) const {
  if (kind_ == ActKind::LeakyRelu) {
    return t >= 0.0 ? ell_ * t : alpha_ * t;
  }
  return alpha_ * t + (ell_ - alpha_) / sharpness_ * softplus(sharpness_ * t);
}

double Activation::d1(double t) const {
  if (kind_ == ActKind::LeakyRelu) {
    return t >= 0.0 ? ell_ : alpha_;
  }
  return alpha_ + (ell_ - alpha_) * logistic(sharpness_ * t);
}

void Activation::value_d1(double t, double& v, double& d1v) const {
  if (kind_ == ActKind::LeakyRelu) {
    if (t >= 0.0) {
      v = ell_ * t;
      d1v = ell_;
    } else {
      v = alpha_ * t;
      d1v = alpha_;
    }
    return;
  }
  double u = sharpness_ * t;
  double p = logistic(u);
  v = alpha_ * t + (ell_ - alpha_) / sharpness_ * softplus(u);
  d1v = alpha_ + (ell_ - alpha_) * p;
}

ActEval Activation::eval(double t) const {
  ActEval e;
  if (kind_ == ActKind::LeakyRelu) {
    if (t == 0.0) {
      throw std::domain_error("activation: leaky-relu second derivative undefined at t=0");
    }
    e.value = t >= 0.0 ? ell_ * t : alpha_ * t;
    e.d1 = t >= 0.0 ? ell_ : alpha_;
    e.d2 = 0.0;
    return e;
  }
  double u = sharpness_ * t;
  double p = logistic(u);
  e.value = alpha_ * t + (ell_ - alpha_) / sharpness_ * softplus(u);
  e.d1 = alpha_ + (ell_ - alpha_) * p;
  e.d2 = (ell_ - alpha_) * sharpness_ * p * (1.0 - p);
  return e;
}

std::string Activation::describe() const {
  if (kind_ == ActKind::LeakyRelu) {
    return "leaky_relu(alpha=" + std::to_string(alpha_) + ", ell=" + std::to_string(ell_) + ")";
  }
  return "smoothed_leaky_relu(alpha=" + std::to_string(alpha_) + ", ell=" +
         std::to_string(ell_) + ", s=" + std::to_string(sharpness_) + ")";
}

}  // namespace ngd
