#include "ngdlab/optim.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ngdlab/data.hpp"

namespace ngd {

namespace {

constexpr double kDivergenceLogLoss = 27.631021115928547;  // log(1e12)

long long elapsed_ns(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() -
                                                              start)
      .count();
}

Mat initial_point(const ErmModel& model, const OptimizerConfig& cfg, const RunOptions& opts) {
  if (opts.w0.has_value()) {
    if (opts.w0->rows != model.rows() || opts.w0->cols != model.cols()) {
      throw std::invalid_argument("run: starting point shape mismatch");
    }
    return *opts.w0;
  }
  Rng rng(cfg.seed, /*stream=*/0);
  return init_weights(model.rows(), model.cols(), cfg.init, rng);
}

struct Recorder {
  const ErmModel& model;
  const RunOptions& opts;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  RunResult* out;
  int log_every;

  void record(int t, const Mat& w, double log_f, double grad_norm, double eta_t, bool force) {
    if (out->config.keep_iterates) out->iterates.push_back(w);
    if (!force && log_every > 1 && t % log_every != 0) return;
    TraceRecord r;
    r.t = t;
    r.loss = std::exp(log_f);
    r.grad_norm = grad_norm;
    r.w_norm = frobenius_norm(w);
    r.train_err = model.train_error(w);
    if (opts.test_error) r.test_err = opts.test_error(w);
    r.eta_t = eta_t;
    r.wall_ns = elapsed_ns(start);
    out->trace.push_back(r);
  }
};

}  // namespace

void OptimizerConfig::validate(int n_samples) const {
  if (!(eta > 0.0) && kind != OptKind::Flow) {
    if (eta != 0.0) throw std::invalid_argument("config: eta must be non-negative");
  }
  if (T < 0) throw std::invalid_argument("config: T must be non-negative");
  if (kind == OptKind::Sngd && (batch < 1 || batch > n_samples)) {
    throw std::invalid_argument("config: batch must be in [1, n]");
  }
  if (kind == OptKind::Flow && !(dt > 0.0)) {
    throw std::invalid_argument("config: dt must be positive");
  }
  if (log_every < 1) throw std::invalid_argument("config: log-every must be >= 1");
}

const char* run_status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::Diverged: return "diverged";
    case RunStatus::ConvergedZeroLoss: return "converged_zero_loss";
  }
  return "unknown";
}

// GD / NGD / SNGD share one iteration loop; they differ only in the step
// size rule and in which gradient (full or minibatch) drives the update.
static RunResult run_iterative(const ErmModel& model, const OptimizerConfig& cfg,
                               const RunOptions& opts) {
  cfg.validate(model.n_samples());
  RunResult res;
  res.config = cfg;
  res.dataset_fp = model.fingerprint();
  Mat w = initial_point(model, cfg, opts);
  Recorder rec{model, opts, std::chrono::steady_clock::now(), &res, cfg.log_every};

  Rng batch_rng(cfg.seed, /*stream=*/1);
  const bool stochastic = cfg.kind == OptKind::Sngd;
  const bool normalized = cfg.kind != OptKind::Gd;
  const int n = model.n_samples();

  double log_f = 0.0;      // full-batch log F(w_t); the trace records this
  double batch_lf = 0.0;   // minibatch log loss at w_t (sngd)
  Vec g;                   // gradient driving the update (full or minibatch)
  double loss_est = 0.0;   // EMA of minibatch losses for EtaEst::Running
  const bool running_est = stochastic && cfg.eta_est == EtaEst::Running;
  if (running_est) loss_est = std::exp(model.log_loss(w));

  auto eval_at = [&](const Mat& point) {
    if (!stochastic) {
      model.value_grad(point, log_f, g);
      batch_lf = log_f;
      return;
    }
    std::vector<int> idx = batch_rng.sample_without_replacement(n, cfg.batch);
    model.batch_value_grad(point, idx, batch_lf, g);
    // Paper semantics: the step size normalizes by the full-batch loss,
    // which also keeps the trace's F column exact.
    log_f = model.log_loss(point);
  };

  eval_at(w);
  for (int t = 0;; ++t) {
    RunStatus stop = RunStatus::Completed;
    if (std::isnan(log_f) || log_f > kDivergenceLogLoss) {
      stop = RunStatus::Diverged;
    } else if (normalized && std::exp(log_f) == 0.0) {
      stop = RunStatus::ConvergedZeroLoss;
    }
    bool last = t == cfg.T || stop != RunStatus::Completed;
    if (running_est) {
      loss_est = (1.0 - cfg.eta_est_beta) * loss_est + cfg.eta_est_beta * std::exp(batch_lf);
    }
    double eta_t = !normalized ? cfg.eta
                 : running_est ? cfg.eta / loss_est
                                : cfg.eta / std::exp(log_f);
    rec.record(t, w, log_f, norm2(g), eta_t, last);
    if (last) {
      res.status = stop;
      break;
    }
    axpy(-eta_t, g, w.a);
    res.eta_steps.push_back(eta_t);
    res.steps_taken = t + 1;
    eval_at(w);
  }
  res.final_w = std::move(w);
  return res;
}

RunResult run_gd(const ErmModel& model, const OptimizerConfig& cfg, const RunOptions& opts) {
  if (cfg.kind != OptKind::Gd) throw std::invalid_argument("run_gd: config kind must be gd");
  return run_iterative(model, cfg, opts);
}

RunResult run_ngd(const ErmModel& model, const OptimizerConfig& cfg, const RunOptions& opts) {
  if (cfg.kind != OptKind::Ngd) throw std::invalid_argument("run_ngd: config kind must be ngd");
  return run_iterative(model, cfg, opts);
}

RunResult run_sngd(const ErmModel& model, const OptimizerConfig& cfg, const RunOptions& opts) {
  if (cfg.kind != OptKind::Sngd) {
    throw std::invalid_argument("run_sngd: config kind must be sngd");
  }
  return run_iterative(model, cfg, opts);
}

RunResult run_flow(const ErmModel& model, const OptimizerConfig& cfg, const RunOptions& opts) {
  if (cfg.kind != OptKind::Flow) throw std::invalid_argument("run_flow: config kind must be flow");
  cfg.validate(model.n_samples());
  RunResult res;
  res.config = cfg;
  res.dataset_fp = model.fingerprint();
  Mat w = initial_point(model, cfg, opts);
  Recorder rec{model, opts, std::chrono::steady_clock::now(), &res, cfg.log_every};

  const double horizon = static_cast<double>(cfg.T) * cfg.dt;
  double dt_work = cfg.dt;
  int halvings = 0;

  double log_f = 0.0;
  Vec g;
  model.value_grad(w, log_f, g);

  int dim = model.rows() * model.cols();
  Vec k1(dim), k2(dim), k3(dim), k4(dim), gs(dim);
  Mat ws = w;

  auto field = [&](const Mat& point, Vec& out) {
    double lf;
    model.value_grad(point, lf, gs);
    double f = std::exp(lf);
    if (f == 0.0) throw std::runtime_error("flow: loss underflowed to zero");
    for (int i = 0; i < dim; ++i) out[i] = -gs[i] / f;
  };

  double t_now = 0.0;
  int step = 0;
  rec.record(0, w, log_f, norm2(g), dt_work, false);
  while (t_now < horizon - 1e-15 * horizon && horizon > 0.0) {
    double h = std::min(dt_work, horizon - t_now);
    double f = std::exp(log_f);
    for (int i = 0; i < dim; ++i) k1[i] = -g[i] / f;

    for (int i = 0; i < dim; ++i) ws.a[i] = w.a[i] + 0.5 * h * k1[i];
    field(ws, k2);
    for (int i = 0; i < dim; ++i) ws.a[i] = w.a[i] + 0.5 * h * k2[i];
    field(ws, k3);
    for (int i = 0; i < dim; ++i) ws.a[i] = w.a[i] + h * k3[i];
    field(ws, k4);
    for (int i = 0; i < dim; ++i) {
      ws.a[i] = w.a[i] + h / 6.0 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]);
    }

    double log_f_new;
    Vec g_new;
    model.value_grad(ws, log_f_new, g_new);
    if (log_f_new > log_f + std::log(1.01)) {
      if (++halvings > 20) {
        throw std::runtime_error("flow: step rejected after 20 dt halvings");
      }
      dt_work *= 0.5;
      continue;
    }
    w.a = ws.a;
    log_f = log_f_new;
    g = std::move(g_new);
    t_now += h;
    ++step;
    res.eta_steps.push_back(h);
    res.steps_taken = step;
    rec.record(step, w, log_f, norm2(g), dt_work, t_now >= horizon - 1e-15 * horizon);
    if (std::exp(log_f) == 0.0) {
      res.status = RunStatus::ConvergedZeroLoss;
      break;
    }
  }
  res.final_w = std::move(w);
  return res;
}

RunResult run(const ErmModel& model, const OptimizerConfig& cfg, const RunOptions& opts) {
  switch (cfg.kind) {
    case OptKind::Gd: return run_gd(model, cfg, opts);
    case OptKind::Ngd: return run_ngd(model, cfg, opts);
    case OptKind::Sngd: return run_sngd(model, cfg, opts);
    case OptKind::Flow: return run_flow(model, cfg, opts);
  }
  throw std::invalid_argument("run: unknown optimizer kind");
}

void write_trace_csv(const std::vector<TraceRecord>& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  out << "t,F,grad_norm,w_norm,train_err,test_err,eta_t,wall_ns\n";
  for (const TraceRecord& r : trace) {
    out << r.t << ',' << format_double(r.loss) << ',' << format_double(r.grad_norm) << ','
        << format_double(r.w_norm) << ',' << format_double(r.train_err) << ',';
    if (!std::isnan(r.test_err)) out << format_double(r.test_err);
    out << ',' << format_double(r.eta_t) << ',' << r.wall_ns << "\n";
  }
  if (!out) throw std::runtime_error("write_trace_csv: write failed for " + path);
}

std::vector<TraceRecord> read_trace_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_trace_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty trace file");
  std::vector<TraceRecord> trace;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> f;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    while (f.size() < 8) f.push_back("");
    if (f.size() != 8) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 8 fields");
    }
    auto num = [&](const std::string& s) -> double {
      if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
      double v = 0.0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                 ": malformed numeric field '" + s + "'");
      }
      return v;
    };
    TraceRecord r;
    r.t = static_cast<int>(num(f[0]));
    r.loss = num(f[1]);
    r.grad_norm = num(f[2]);
    r.w_norm = num(f[3]);
    r.train_err = num(f[4]);
    r.test_err = f[5].empty() ? std::numeric_limits<double>::quiet_NaN() : num(f[5]);
    r.eta_t = num(f[6]);
    r.wall_ns = static_cast<long long>(num(f[7]));
    trace.push_back(r);
  }
  return trace;
}

}  // namespace ngd
