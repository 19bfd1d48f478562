// Hidden-layer activations: smoothed leaky-ReLU (slopes in [alpha, ell],
// curvature bounded by (ell - alpha) * sharpness / 4) and piecewise-linear
// leaky-ReLU. Hessian-based code must reject the non-smooth kind.
#pragma once

#include <string>

namespace ngd {

enum class ActKind { SmoothedLeakyRelu, LeakyRelu };

struct ActEval {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

class Activation {
 public:
  static Activation smoothed_leaky_relu(double alpha, double ell, double sharpness);
  static Activation leaky_relu(double alpha, double ell);

  ActKind kind() const { return kind_; }
  double alpha() const { return alpha_; }
  double ell() const { return ell_; }
  double sharpness() const { return sharpness_; }
  bool smooth() const { return kind_ == ActKind::SmoothedLeakyRelu; }

  // Curvature bound L with |sigma''| <= L everywhere. Smooth kind only.
  double curvature_bound() const;

  double value(double t) const;
  double d1(double t) const;
  // value + first derivative; defined for every t (leaky-ReLU takes the ell
  // branch at exactly t = 0).
  void value_d1(double t, double& v, double& d1) const;
  // Full evaluation including sigma''. Throws std::domain_error for the
  // leaky-ReLU kind at t = 0 where the second derivative does not exist.
  ActEval eval(double t) const;

  std::string describe() const;

 private:
  Activation(ActKind kind, double alpha, double ell, double sharpness);
  ActKind kind_;
  double alpha_;
  double ell_;
  double sharpness_;
};

}  // namespace ngd
