// Two-layer network Phi(W, x) = sum_j a_j sigma(<w_j, x>) with the first
// layer trained and second-layer weights frozen at +-1/m.
#pragma once

#include "ngdlab/activation.hpp"
#include "ngdlab/numerics.hpp"

namespace ngd {

enum class SignScheme { Random, Balanced };
enum class InitKind { Zero, GaussianRowNormalized };

// m second-layer weights, each +-1/m. Random draws i.i.d. signs; Balanced
// alternates +,-,+,- so an even-width net has Phi(0, x) = 0 for any
// activation.
Vec second_layer_signs(int m, SignScheme scheme, Rng& rng);

// Zero, or rows drawn standard Gaussian and normalized to unit length.
Mat init_weights(int m, int d, InitKind kind, Rng& rng);

struct TwoLayerNet {
  Mat W;  // m x d
  Vec a;  // m entries, each +-1/m
  Activation act;

  TwoLayerNet(Mat w, Vec a_in, Activation activation);
  int m() const { return W.rows; }
  int d() const { return W.cols; }
};

double forward(const TwoLayerNet& net, const Vec& x);

// Gradient of Phi w.r.t. the concatenated weights; block j is
// a_j sigma'(<w_j, x>) x.
Vec grad_phi(const TwoLayerNet& net, const Vec& x);

// Action of the (block-diagonal) Phi-Hessian: block j is
// a_j sigma''(<w_j, x>) <x, v_j> x. Smooth activations only.
Vec hvp_phi(const TwoLayerNet& net, const Vec& x, const Vec& v);

}  // namespace ngd
