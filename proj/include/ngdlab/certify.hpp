// Theoretical constants (h, H, mu, C, rho, rate) for the two-layer ERM
// objective and empirical verification of the corresponding ratio bounds on
// sampled points and trajectories.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "ngdlab/numerics.hpp"
#include "ngdlab/objective.hpp"
#include "ngdlab/optim.hpp"

namespace ngd {

struct TheoryConstants {
  double R = 0.0;        // data radius
  double L = 0.0;        // activation curvature bound (NaN when non-smooth)
  double h = 0.0;        // ell R / sqrt(m)
  double H_paper = 0.0;  // L R^2 / m^2 + ell^2 R^2 / m
  double H_impl = 0.0;   // L R^2 / m   + ell^2 R^2 / m
  double mu_linear = 0.0;  // alpha gamma / sqrt(m)
  double C = 0.0;          // exp(R ell h eta / sqrt(m) + L R^2 h^2 eta^2 / m)
  double rho = 0.0;        // h^2 n / mu^2
  double rate_bound = 0.0;  // 1 - eta mu^2 / 2
  double eta = 0.0;
  double gamma = 0.0;
};

// gamma <= 0 rejects (mu would be meaningless); eta enters C and the rate.
TheoryConstants constants(const Objective& obj, double gamma, double eta);

// Step size satisfying eta <= mu^2 / (H C h^2) with C resolved at the
// candidate step by one fixed-point iteration from C = e. Uses the
// differentiation-derived Hessian constant.
double auto_safe_eta(const Objective& obj, double gamma);

struct GradRatioStats {
  double max_ratio = 0.0;
  double min_ratio = 0.0;
  int argmax = -1;
  int argmin = -1;
  std::vector<double> ratios;
};
GradRatioStats check_gradient_ratio(const Objective& obj, const std::vector<Mat>& points);

struct HessRatioStats {
  double max_ratio = 0.0;
  int argmax = -1;
  std::vector<double> ratios;
};
// Operator norms via power iteration on the loss Hessian action;
// non-convergence at a point throws naming that point's index.
HessRatioStats check_hessian_ratio(const Objective& obj, const std::vector<Mat>& points,
                                   double tol = 1e-6, int max_iter = 1500,
                                   uint64_t seed = 12345, int workers = 1);

struct PathCheckResult {
  double max_ratio = 0.0;
  int arg_segment = -1;
  double arg_lambda = 0.0;
};
std::vector<double> default_lambda_grid();  // 0 : 0.05 : 1

// Scans F(w_t + lambda (w_{t+1} - w_t)) / F(w_t) over every consecutive
// trajectory segment; requires the run to carry its iterates.
PathCheckResult check_path_loglipschitz(const Objective& obj, const RunResult& run,
                                        const std::vector<double>& lambdas = default_lambda_grid());

// Monte-Carlo estimate of E ||grad F_z||^2 / ||grad F||^2 over `trials`
// uniform batches of the given size.
double check_strong_growth(const Objective& obj, const Mat& W, int batch, int trials, Rng& rng);

struct RateCheck {
  bool pass = true;
  int first_violation = -1;
  double worst_log_excess = 0.0;  // max over t of log F_t - log(bound^t F_0)
};
// Verifies F_t <= rate_bound^t F_0 (relative slack) along a trace.
RateCheck check_rate(const std::vector<TraceRecord>& trace, double rate_bound,
                     double rel_slack = 1e-12);

// Gaussian-random weight matrices rescaled to each Frobenius radius,
// `per_radius` of them per radius.
std::vector<Mat> sample_weight_points(int per_radius, std::span<const double> radii, int m,
                                      int d, Rng& rng);

// Tolerances for the pass flags below (additive for gradient-ratio and
// path bounds, relative for operator norms and the rate).
struct CertTolerances {
  double grad_slack = 1e-9;
  double hess_rel_slack = 1e-6;
  double path_slack = 1e-9;
  double rate_rel_slack = 1e-12;
};

struct CertReport {
  // Theory.
  double h_theory = 0.0;
  double H_theory_paper = 0.0;
  double H_theory_impl = 0.0;
  double mu_linear = 0.0;
  double mu_network = 0.0;  // network margin at the final iterate
  double C_theory = 0.0;
  double rho_theory = 0.0;
  double rate_bound = 0.0;
  double eta = 0.0;
  double gamma = 0.0;
  // Empirics.
  double max_grad_ratio = 0.0;
  double min_grad_ratio = 0.0;
  double max_hess_ratio = 0.0;
  double max_path_ratio = 0.0;
  double rho_hat = 0.0;
  int n_ratio_points = 0;
  int n_hess_points = 0;
  int n_path_segments = 0;
  int sgc_trials = 0;
  int sgc_batch = 0;
  int rate_first_violation = -1;
  // Pass flags (recomputable from the numbers above).
  bool pass_grad_upper = false;
  bool pass_grad_lower = false;
  bool pass_hess_impl = false;
  bool pass_hess_paper = false;
  bool pass_path = false;
  bool pass_rate = false;
  bool pass_sgc = false;
  CertTolerances tol;

  bool all_core_pass() const {
    return pass_grad_upper && pass_grad_lower && pass_hess_impl && pass_path && pass_rate &&
           pass_sgc;
  }
};

void recompute_pass_flags(CertReport& rep);

struct CertifyOptions {
  int points_per_radius = 50;
  std::vector<double> radii = {0.1, 1.0, 10.0};
  int sgc_batch = 1;
  int sgc_trials = 2000;
  uint64_t seed = 9001;
  int workers = 1;
  CertTolerances tol;
};

// Full certification of an NGD run: constants, gradient/Hessian ratios on
// off-trajectory + trajectory points, path log-Lipschitzness, the rate
// bound and the strong-growth estimate at the initial iterate.
CertReport run_certification(const Objective& obj, const RunResult& run, double gamma,
                             const CertifyOptions& opts);

// Flat name=value serialization; parse inverts it losslessly.
void write_report(const CertReport& rep, const std::string& path);
CertReport read_report(const std::string& path);

// Per-point ratio table: index, source (random|trajectory), grad_ratio,
// hess_ratio. The first n_random_points rows are the off-trajectory samples.
void write_ratio_csv(const std::string& path, const GradRatioStats& grad,
                     const HessRatioStats& hess, int n_random_points);

}  // namespace ngd
