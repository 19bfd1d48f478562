// ERM objective F(W) = (1/n) sum_i f(y_i Phi(W, x_i)) binding a loss kind,
// a network template (activation + frozen second layer) and a dataset.
#pragma once

#include <span>

#include "ngdlab/activation.hpp"
#include "ngdlab/model.hpp"
#include "ngdlab/numerics.hpp"

namespace ngd {

enum class LossKind { Exponential, Logistic };

// f, f', f'' for a scalar margin. Exponential-loss values are returned in
// log space by the objective below; these helpers are for moderate margins.
double loss_value(LossKind kind, double margin);
double loss_d1(LossKind kind, double margin);
double loss_d2(LossKind kind, double margin);
// Lipschitz constant of f (logistic: 1). Throws for the exponential loss,
// whose derivative is unbounded.
double loss_lipschitz(LossKind kind);
// Smoothness of f (logistic: 1/4). Throws for the exponential loss.
double loss_smoothness(LossKind kind);

struct Dataset {
  Mat X;  // n x d
  Vec y;  // entries in {-1, +1}
  double radius = 0.0;  // max_i ||x_i||, recomputed on construction

  static Dataset from_xy(Mat x, Vec labels);
  int n() const { return X.rows; }
  int d() const { return X.cols; }
};

uint64_t dataset_fingerprint(const Dataset& data);

// Margin certified by an explicit linear separator: min_i y_i <x_i, w*> / ||w*||.
double linear_margin(const Dataset& data, const Vec& w_star);

// log((1/n) sum_i f(margin_i)); the exponential loss goes through
// log-sum-exp so margins far beyond +-700 stay finite here.
double log_mean_loss(LossKind kind, const Vec& margins);

class Objective {
 public:
  Objective(LossKind loss, Activation act, Vec second_layer, Dataset data);

  LossKind loss() const { return loss_; }
  const Activation& act() const { return act_; }
  const Vec& second_layer() const { return a_; }
  const Dataset& data() const { return data_; }
  int m() const { return static_cast<int>(a_.size()); }
  int d() const { return data_.d(); }
  int n() const { return data_.n(); }
  int dim() const { return m() * d(); }

  // y_i Phi(W, x_i) for every sample.
  Vec margins(const Mat& W) const;

  // F(W). Exponential loss accumulates per-sample terms in log space;
  // throws std::overflow_error only if the final value itself overflows.
  double loss_eval(const Mat& W) const;
  // log F(W); finite whenever the margins are finite.
  double log_loss(const Mat& W) const;

  Vec loss_grad(const Mat& W) const;
  // Fused log F(W) and gradient in one pass over the data.
  void loss_value_grad(const Mat& W, double& log_f, Vec& grad) const;
  // Same over a subset of samples (ascending indices), scaled by 1/|idx|.
  void batch_value_grad(const Mat& W, std::span<const int> idx, double& log_f,
                        Vec& grad) const;

  // Action of the loss Hessian on v. Smooth activations only.
  Vec loss_hvp(const Mat& W, const Vec& v) const;

  // Fraction misclassified; Phi = 0 counts as an error for either label.
  double train_error(const Mat& W) const;
  // min_i y_i Phi(W, x_i) / ||W||_F. Throws on zero weights.
  double network_margin(const Mat& W) const;

  // Misclassification rate of this objective's model on held-out data.
  double error_on(const Mat& W, const Dataset& test) const;
  // Average loss of this objective's model on held-out data.
  double loss_on(const Mat& W, const Dataset& test) const;

 private:
  void check_shape(const Mat& W) const;
  LossKind loss_;
  Activation act_;
  Vec a_;
  Dataset data_;
};

// Two-layer model block: width, activation, second-layer sign scheme.
struct NetSpec {
  int m = 50;
  Activation act = Activation::smoothed_leaky_relu(0.2, 1.0, 4.0);
  SignScheme signs = SignScheme::Random;
  uint64_t sign_seed = 0;

  Objective bind(LossKind loss, Dataset data) const;
};

// Loss Hessian at a fixed W with per-sample pre-activations cached, for
// repeated Hessian-vector products at the same point (power iteration).
class HessianOperator {
 public:
  HessianOperator(const Objective& obj, const Mat& W);
  void apply(const Vec& v, Vec& out) const;
  Vec apply(const Vec& v) const;
  int dim() const { return dim_; }

 private:
  const Objective& obj_;
  int dim_;
  Vec s1_;  // n*m: a_j sigma'(u_ij), the blocks of grad Phi_i
  Vec s2_;  // n*m: f'(margin_i) y_i a_j sigma''(u_ij) / n
  Vec f2_;  // n: f''(margin_i) / n
};

}  // namespace ngd
