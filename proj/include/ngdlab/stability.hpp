// Leave-one-out stability experiments and update-map expansiveness checks
// for convex objectives (linear model or frozen random features).
#pragma once

#include <optional>

#include "ngdlab/data.hpp"
#include "ngdlab/numerics.hpp"
#include "ngdlab/objective.hpp"
#include "ngdlab/optim.hpp"

namespace ngd {

enum class ConvexKind { Linear, RandomFeatures };

// F(w) = (1/n) sum_i f(y_i <w, phi(x_i)>), convex in w. Linear uses
// phi(x) = x; random features freeze phi(x)_j = a_j sigma(<A_j, x>) with
// unit-normalized Gaussian rows A_j and signs a_j = +-1/m.
class ConvexObjective : public ErmModel {
 public:
  static ConvexObjective linear(LossKind loss, Dataset data);
  static ConvexObjective random_features(LossKind loss, Dataset data, int width,
                                         const Activation& act, SignScheme signs,
                                         uint64_t seed);

  // ErmModel surface (weights are a 1 x dim matrix).
  int rows() const override { return 1; }
  int cols() const override { return feats_.cols; }
  int n_samples() const override { return feats_.rows; }
  void value_grad(const Mat& w, double& log_f, Vec& g) const override;
  double log_loss(const Mat& w) const override;
  void batch_value_grad(const Mat& w, std::span<const int> idx, double& log_f,
                        Vec& g) const override;
  double train_error(const Mat& w) const override;
  uint64_t fingerprint() const override;

  LossKind loss() const { return loss_; }
  int dim() const { return feats_.cols; }
  // max_i ||phi(x_i)||; the effective data radius of the feature-space
  // linear model, hence its self-bounded-gradient constant.
  double feature_radius() const { return feature_radius_; }
  double self_bound_h() const { return feature_radius_; }
  // Lipschitz constant of F in w (|f'| <= 1 for logistic). Throws for the
  // exponential loss.
  double lipschitz_G() const;
  // Smoothness of F in w (f'' <= 1/4 for logistic). Throws for exponential.
  double smoothness() const;

  double value(const Mat& w) const { return std::exp(log_loss(w)); }
  Vec grad(const Mat& w) const;

  // Leave-one-out loss F^{-i}: the same 1/n-scaled sum with term i dropped.
  void loo_value_grad(const Mat& w, int skip, double& log_f, Vec& g) const;

  Vec featurize(const Vec& x) const;
  double loss_on(const Mat& w, const Dataset& test) const;
  double error_on(const Mat& w, const Dataset& test) const;
  // min over the test sample of |<w, phi(x)>| / ||w|| (margin-assumption
  // proxy; reported, never asserted).
  double margin_proxy(const Mat& w, const Dataset& test) const;

 private:
  ConvexObjective(LossKind loss, Mat feats, Vec y);
  Vec sample_margins(const Mat& w, std::span<const int> idx) const;
  LossKind loss_;
  Mat feats_;  // n x dim
  Vec y_;
  double feature_radius_ = 0.0;
  // Random-features map (empty for the linear kind).
  std::optional<Mat> rf_a_;
  std::optional<Activation> rf_act_;
  Vec rf_signs_;
};

struct ConvexModelSpec {
  ConvexKind kind = ConvexKind::Linear;
  LossKind loss = LossKind::Logistic;
  int rf_width = 0;
  std::optional<Activation> rf_act;
  SignScheme rf_signs = SignScheme::Random;
  uint64_t rf_seed = 0;

  ConvexObjective build(Dataset data) const;
};

struct NonexpansiveResult {
  int pairs = 0;
  int violations = 0;
  double max_ratio = 0.0;  // max of ||G(w) - G(v)|| / ||w - v||
};

// Samples random (w, v) pairs at mixed radii {0.1, 1, 10}, applies one
// normalized-GD update map with eta = 0.99 / (h max(F(w), F(v))) and counts
// expansiveness violations (ratio > 1 + 1e-12). Requires h <= 1.
NonexpansiveResult check_nonexpansive(const ConvexObjective& obj, int pairs, Rng& rng,
                                      double rel_slack = 1e-12);

struct LooRun {
  int held_out = -1;
  std::vector<double> dist;       // ||w_t - w_t^{-i}|| per t
  std::vector<double> delta_hat;  // F^{-i}(w_t^{-i}) / F^{-i}(w_t) per t
  std::vector<double> eta_steps;  // copied from the paired full run
  std::vector<double> cum_bound;  // (h/n) sum_{s<t} eta_s F(w_s) per t
  double max_delta = 0.0;
  double max_dist_excess = 0.0;   // max over t of dist - cum_bound
};

// Couples a leave-one-out trajectory to a full-data run: both start at the
// same point and share the full run's step sizes. The full run must keep
// its iterates. n = 1 is degenerate (F^{-i} vanishes identically).
LooRun run_loo(const ConvexObjective& obj, const RunResult& full, int held_out);

struct LooExperiment {
  RunResult full;
  std::vector<LooRun> runs;  // one per sample
  double max_delta = 0.0;
  double h = 0.0;
};
LooExperiment run_all_loo(const ConvexObjective& obj, const OptimizerConfig& cfg, int workers);

struct GapTrialRow {
  int trial = 0;
  int n = 0;
  int T = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_err = 0.0;
  double gap = 0.0;
};

struct GapEstimate {
  int trials = 0;
  int n = 0;
  int T = 0;
  double mean_gap = 0.0;
  double bound_lipschitz = 0.0;  // 2 G T / n
  double bound_smooth = 0.0;     // 4 E[F] + 3 Ltilde^2 T / n
  double mean_train_loss = 0.0;
  double mean_test_loss = 0.0;
  double mean_test_error = 0.0;
  double weight_slope = 0.0;
  double weight_r2 = 0.0;
  double margin_proxy = 0.0;
  double G = 0.0;
  double smoothness = 0.0;
  std::vector<GapTrialRow> rows;
};

struct GapConfig {
  GenSpec dist;  // training distribution; the separator is resolved once
  ConvexModelSpec model;
  OptimizerConfig opt;  // ngd
  int trials = 20;
  int test_size = 2000;
  uint64_t master_seed = 0;
  int workers = 1;
};

// Fresh training sets are resampled per trial; the generalization gap
// (test loss - train loss at w_T) is averaged across trials and compared
// against the stability bounds.
GapEstimate estimate_gap(const GapConfig& cfg);

void write_gap_csv(const GapEstimate& est, const std::string& path);

struct ScalingResult {
  double mean_test_error = 0.0;
  double c1 = 0.0;  // fit: err ~ c1 * F(w_T)/T + c2 / n
  double c2 = 0.0;
  double weight_slope = 0.0;
  double weight_r2 = 0.0;
  double margin_proxy = 0.0;
  std::vector<GapTrialRow> rows;
};

// Measurement-only test-error scaling for the two-layer net: trials cycle
// over {T, T/2} x {n, n/2} so the two regressors vary, then least squares
// fits (c1, c2). Nothing here is asserted beyond what callers check.
ScalingResult test_error_scaling(const GenSpec& dist, const NetSpec& net, LossKind loss,
                                 const OptimizerConfig& base, int trials, int test_size,
                                 uint64_t master_seed, int workers);

}  // namespace ngd
