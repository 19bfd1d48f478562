// Training procedures: fixed-step GD, normalized GD (step eta / F(w_t)),
// stochastic normalized GD, and normalized gradient flow, each emitting a
// full per-iteration trace.
#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ngdlab/numerics.hpp"
#include "ngdlab/objective.hpp"

namespace ngd {

enum class OptKind { Gd, Ngd, Sngd, Flow };
enum class EtaPolicy { FixedEta, AutoSafe };
enum class EtaEst { FullBatch, Running };

struct OptimizerConfig {
  OptKind kind = OptKind::Ngd;
  double eta = 1.0;   // gd: the literal step; ngd/sngd: rate in eta_t = eta / F
  int T = 100;        // iterations (flow: step count, horizon T * dt)
  int batch = 1;      // sngd batch size b in [1, n]
  double dt = 1e-3;   // flow integrator step
  uint64_t seed = 0;
  InitKind init = InitKind::GaussianRowNormalized;
  EtaPolicy eta_policy = EtaPolicy::FixedEta;
  EtaEst eta_est = EtaEst::FullBatch;  // sngd step-size loss estimate
  double eta_est_beta = 0.1;           // EMA weight for EtaEst::Running
  int log_every = 1;
  bool keep_iterates = true;

  void validate(int n_samples) const;
};

struct TraceRecord {
  int t = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double w_norm = 0.0;
  double train_err = 0.0;
  double test_err = std::numeric_limits<double>::quiet_NaN();  // NaN = no held-out set
  double eta_t = 0.0;
  long long wall_ns = 0;
};

enum class RunStatus { Completed, Diverged, ConvergedZeroLoss };

struct RunResult {
  Mat final_w;
  std::vector<TraceRecord> trace;
  std::vector<Mat> iterates;      // w_0..w_T when keep_iterates
  std::vector<double> eta_steps;  // step size actually applied at each step
  OptimizerConfig config;
  uint64_t dataset_fp = 0;
  RunStatus status = RunStatus::Completed;
  int steps_taken = 0;
};

const char* run_status_name(RunStatus s);

// The surface the optimizers drive. Implemented by the two-layer Objective
// and by the convex models in the stability module.
class ErmModel {
 public:
  virtual ~ErmModel() = default;
  virtual int rows() const = 0;
  virtual int cols() const = 0;
  virtual int n_samples() const = 0;
  virtual void value_grad(const Mat& w, double& log_loss, Vec& grad) const = 0;
  virtual double log_loss(const Mat& w) const = 0;
  virtual void batch_value_grad(const Mat& w, std::span<const int> idx, double& log_loss,
                                Vec& grad) const = 0;
  virtual double train_error(const Mat& w) const = 0;
  virtual uint64_t fingerprint() const = 0;
};

class ObjectiveModel : public ErmModel {
 public:
  explicit ObjectiveModel(const Objective& obj) : obj_(obj) {}
  int rows() const override { return obj_.m(); }
  int cols() const override { return obj_.d(); }
  int n_samples() const override { return obj_.n(); }
  void value_grad(const Mat& w, double& lf, Vec& g) const override {
    obj_.loss_value_grad(w, lf, g);
  }
  double log_loss(const Mat& w) const override { return obj_.log_loss(w); }
  void batch_value_grad(const Mat& w, std::span<const int> idx, double& lf,
                        Vec& g) const override {
    obj_.batch_value_grad(w, idx, lf, g);
  }
  double train_error(const Mat& w) const override { return obj_.train_error(w); }
  uint64_t fingerprint() const override { return dataset_fingerprint(obj_.data()); }

 private:
  const Objective& obj_;
};

using TestErrorFn = std::function<double(const Mat&)>;

// Optional starting point; when absent the config's init/seed draws one.
struct RunOptions {
  std::optional<Mat> w0;
  TestErrorFn test_error;  // empty leaves the test_err column blank
};

RunResult run_gd(const ErmModel& model, const OptimizerConfig& cfg,
                 const RunOptions& opts = {});
RunResult run_ngd(const ErmModel& model, const OptimizerConfig& cfg,
                  const RunOptions& opts = {});
RunResult run_sngd(const ErmModel& model, const OptimizerConfig& cfg,
                   const RunOptions& opts = {});
// Classical 4th-order one-step integration of dw/dt = -grad F / F with
// fixed dt; on a >1% single-step loss increase the step is halved, up to
// 20 times, before giving up.
RunResult run_flow(const ErmModel& model, const OptimizerConfig& cfg,
                   const RunOptions& opts = {});

RunResult run(const ErmModel& model, const OptimizerConfig& cfg, const RunOptions& opts = {});

// Trace CSV: header t,F,grad_norm,w_norm,train_err,test_err,eta_t,wall_ns.
void write_trace_csv(const std::vector<TraceRecord>& trace, const std::string& path);
std::vector<TraceRecord> read_trace_csv(const std::string& path);

}  // namespace ngd
