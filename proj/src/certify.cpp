#include "ngdlab/certify.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ngdlab/data.hpp"

namespace ngd {

TheoryConstants constants(const Objective& obj, double gamma, double eta) {
  if (!(gamma > 0.0)) throw std::invalid_argument("constants: gamma must be positive");
  TheoryConstants c;
  double m = static_cast<double>(obj.m());
  c.R = obj.data().radius;
  c.gamma = gamma;
  c.eta = eta;
  double ell = obj.act().ell();
  c.h = ell * c.R / std::sqrt(m);
  c.mu_linear = obj.act().alpha() * gamma / std::sqrt(m);
  if (obj.act().smooth()) {
    c.L = obj.act().curvature_bound();
    c.H_paper = c.L * c.R * c.R / (m * m) + ell * ell * c.R * c.R / m;
    c.H_impl = c.L * c.R * c.R / m + ell * ell * c.R * c.R / m;
    c.C = std::exp(c.R * ell * c.h * eta / std::sqrt(m) + c.L * c.R * c.R * c.h * c.h * eta * eta / m);
  } else {
    c.L = std::numeric_limits<double>::quiet_NaN();
    c.H_paper = std::numeric_limits<double>::quiet_NaN();
    c.H_impl = std::numeric_limits<double>::quiet_NaN();
    c.C = std::numeric_limits<double>::quiet_NaN();
  }
  c.rho = c.h * c.h * static_cast<double>(obj.n()) / (c.mu_linear * c.mu_linear);
  c.rate_bound = 1.0 - eta * c.mu_linear * c.mu_linear / 2.0;
  return c;
}

double auto_safe_eta(const Objective& obj, double gamma) {
  if (!obj.act().smooth()) {
    throw std::domain_error("auto_safe_eta: requires a smooth activation (Hessian bound)");
  }
  if (!(gamma > 0.0)) throw std::invalid_argument("auto_safe_eta: gamma must be positive");
  if (!(obj.act().alpha() > 0.0)) {
    throw std::invalid_argument("auto_safe_eta: alpha must be positive for a usable mu");
  }
  double m = static_cast<double>(obj.m());
  double R = obj.data().radius;
  double ell = obj.act().ell();
  double L = obj.act().curvature_bound();
  double h = ell * R / std::sqrt(m);
  double H = L * R * R / m + ell * ell * R * R / m;
  double mu = obj.act().alpha() * gamma / std::sqrt(m);
  double candidate = mu * mu / (H * std::exp(1.0) * h * h);
  double C = std::exp(R * ell * h * candidate / std::sqrt(m) +
                      L * R * R * h * h * candidate * candidate / m);
  return mu * mu / (H * C * h * h);
}

GradRatioStats check_gradient_ratio(const Objective& obj, const std::vector<Mat>& points) {
  if (points.empty()) throw std::invalid_argument("check_gradient_ratio: no points");
  GradRatioStats st;
  st.max_ratio = -std::numeric_limits<double>::infinity();
  st.min_ratio = std::numeric_limits<double>::infinity();
  st.ratios.resize(points.size());
  Vec g;
  for (size_t k = 0; k < points.size(); ++k) {
    double log_f;
    obj.loss_value_grad(points[k], log_f, g);
    double f = std::exp(log_f);
    if (f == 0.0) {
      throw std::runtime_error("check_gradient_ratio: loss is zero at point " + std::to_string(k));
    }
    double r = norm2(g) / f;
    st.ratios[k] = r;
    if (r > st.max_ratio) {
      st.max_ratio = r;
      st.argmax = static_cast<int>(k);
    }
    if (r < st.min_ratio) {
      st.min_ratio = r;
      st.argmin = static_cast<int>(k);
    }
  }
  return st;
}

HessRatioStats check_hessian_ratio(const Objective& obj, const std::vector<Mat>& points,
                                   double tol, int max_iter, uint64_t seed, int workers) {
  if (points.empty()) throw std::invalid_argument("check_hessian_ratio: no points");
  if (!obj.act().smooth()) {
    throw std::domain_error("check_hessian_ratio: requires a smooth activation");
  }
  HessRatioStats st;
  st.ratios.assign(points.size(), 0.0);
  std::vector<int> failed(points.size(), 0);
  parallel_for(static_cast<int>(points.size()), workers, [&](int k) {
    HessianOperator hess(obj, points[k]);
    Rng rng(seed, static_cast<uint64_t>(k));
    auto apply = [&](const Vec& v, Vec& out) { hess.apply(v, out); };
    PowerIterResult pi = power_iteration(apply, obj.dim(), tol, max_iter, rng);
    if (!pi.converged) {
      failed[k] = 1;
      return;
    }
    double f = std::exp(obj.log_loss(points[k]));
    st.ratios[k] = pi.value / f;
  });
  for (size_t k = 0; k < points.size(); ++k) {
    if (failed[k]) {
      throw std::runtime_error("check_hessian_ratio: power iteration did not converge at point " +
                               std::to_string(k));
    }
  }
  st.max_ratio = -std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < points.size(); ++k) {
    if (st.ratios[k] > st.max_ratio) {
      st.max_ratio = st.ratios[k];
      st.argmax = static_cast<int>(k);
    }
  }
  return st;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(0.05 * i);
  return grid;
}

PathCheckResult check_path_loglipschitz(const Objective& obj, const RunResult& run,
                                        const std::vector<double>& lambdas) {
  if (run.iterates.size() < 2) {
    throw std::invalid_argument("check_path_loglipschitz: run carries no trajectory segments");
  }
  PathCheckResult res;
  res.max_ratio = -std::numeric_limits<double>::infinity();
  Mat probe = run.iterates.front();
  for (size_t t = 0; t + 1 < run.iterates.size(); ++t) {
    const Mat& w0 = run.iterates[t];
    const Mat& w1 = run.iterates[t + 1];
    double log_f0 = obj.log_loss(w0);
    for (double lam : lambdas) {
      for (size_t i = 0; i < probe.a.size(); ++i) {
        probe.a[i] = w0.a[i] + lam * (w1.a[i] - w0.a[i]);
      }
      double ratio = std::exp(obj.log_loss(probe) - log_f0);
      if (ratio > res.max_ratio) {
        res.max_ratio = ratio;
        res.arg_segment = static_cast<int>(t);
        res.arg_lambda = lam;
      }
    }
  }
  return res;
}

double check_strong_growth(const Objective& obj, const Mat& W, int batch, int trials, Rng& rng) {
  if (batch < 1 || batch > obj.n()) {
    throw std::invalid_argument("check_strong_growth: batch must be in [1, n]");
  }
  if (trials < 1) throw std::invalid_argument("check_strong_growth: trials must be >= 1");
  Vec g_full = obj.loss_grad(W);
  double denom = dot(g_full, g_full);
  if (denom == 0.0) throw std::runtime_error("check_strong_growth: full gradient vanishes");
  CompensatedSum acc;
  Vec g;
  double lf;
  for (int trial = 0; trial < trials; ++trial) {
    std::vector<int> idx = rng.sample_without_replacement(obj.n(), batch);
    obj.batch_value_grad(W, idx, lf, g);
    acc.add(dot(g, g) / denom);
  }
  return acc.value() / static_cast<double>(trials);
}

RateCheck check_rate(const std::vector<TraceRecord>& trace, double rate_bound, double rel_slack) {
  if (trace.empty()) throw std::invalid_argument("check_rate: empty trace");
  if (!(rate_bound > 0.0) || !(rate_bound <= 1.0)) {
    throw std::invalid_argument("check_rate: rate bound must lie in (0, 1]");
  }
  RateCheck rc;
  double log_f0 = std::log(trace.front().loss);
  double log_bound = std::log(rate_bound);
  double slack = std::log1p(rel_slack);
  rc.worst_log_excess = -std::numeric_limits<double>::infinity();
  for (const TraceRecord& r : trace) {
    double lhs = std::log(r.loss);  // -inf on underflow passes every bound
    double rhs = log_f0 + static_cast<double>(r.t) * log_bound;
    double excess = lhs - rhs;
    if (excess > rc.worst_log_excess) rc.worst_log_excess = excess;
    if (lhs > rhs + slack && rc.pass) {
      rc.pass = false;
      rc.first_violation = r.t;
    }
  }
  return rc;
}

std::vector<Mat> sample_weight_points(int per_radius, std::span<const double> radii, int m,
                                      int d, Rng& rng) {
  std::vector<Mat> pts;
  pts.reserve(static_cast<size_t>(per_radius) * radii.size());
  for (double r : radii) {
    for (int k = 0; k < per_radius; ++k) {
      Mat w(m, d);
      double n2 = 0.0;
      do {
        for (double& v : w.a) v = rng.normal();
        n2 = norm2(w.a);
      } while (n2 == 0.0);
      scale(w.a, r / n2);
      pts.push_back(std::move(w));
    }
  }
  return pts;
}

void recompute_pass_flags(CertReport& rep) {
  rep.pass_grad_upper = rep.max_grad_ratio <= rep.h_theory + rep.tol.grad_slack;
  rep.pass_grad_lower = rep.min_grad_ratio >= rep.mu_linear - rep.tol.grad_slack;
  rep.pass_hess_impl =
      rep.max_hess_ratio <= rep.H_theory_impl * (1.0 + rep.tol.hess_rel_slack);
  rep.pass_hess_paper =
      rep.max_hess_ratio <= rep.H_theory_paper * (1.0 + rep.tol.hess_rel_slack);
  rep.pass_path = rep.max_path_ratio <= rep.C_theory + rep.tol.path_slack;
  rep.pass_rate = rep.rate_first_violation < 0;
  rep.pass_sgc = rep.rho_hat <= rep.rho_theory;
}

CertReport run_certification(const Objective& obj, const RunResult& run, double gamma,
                             const CertifyOptions& opts) {
  if (run.iterates.empty()) {
    throw std::invalid_argument("run_certification: run must keep its iterates");
  }
  CertReport rep;
  rep.tol = opts.tol;
  TheoryConstants tc = constants(obj, gamma, run.config.eta);
  rep.h_theory = tc.h;
  rep.H_theory_paper = tc.H_paper;
  rep.H_theory_impl = tc.H_impl;
  rep.mu_linear = tc.mu_linear;
  rep.C_theory = tc.C;
  rep.rho_theory = tc.rho;
  rep.rate_bound = tc.rate_bound;
  rep.eta = run.config.eta;
  rep.gamma = gamma;
  rep.mu_network = obj.network_margin(run.final_w);

  Rng rng(opts.seed, /*stream=*/0);
  // Off-trajectory samples first, then every trajectory iterate.
  std::vector<Mat> pts =
      sample_weight_points(opts.points_per_radius, opts.radii, obj.m(), obj.d(), rng);
  pts.insert(pts.end(), run.iterates.begin(), run.iterates.end());

  GradRatioStats grads = check_gradient_ratio(obj, pts);
  rep.max_grad_ratio = grads.max_ratio;
  rep.min_grad_ratio = grads.min_ratio;
  rep.n_ratio_points = static_cast<int>(pts.size());

  HessRatioStats hess =
      check_hessian_ratio(obj, pts, 1e-6, 1500, opts.seed + 1, opts.workers);
  rep.max_hess_ratio = hess.max_ratio;
  rep.n_hess_points = static_cast<int>(pts.size());

  PathCheckResult path = check_path_loglipschitz(obj, run);
  rep.max_path_ratio = path.max_ratio;
  rep.n_path_segments = static_cast<int>(run.iterates.size()) - 1;

  Rng sgc_rng(opts.seed, /*stream=*/7);
  rep.rho_hat =
      check_strong_growth(obj, run.iterates.front(), opts.sgc_batch, opts.sgc_trials, sgc_rng);
  rep.sgc_trials = opts.sgc_trials;
  rep.sgc_batch = opts.sgc_batch;

  RateCheck rate = check_rate(run.trace, tc.rate_bound, opts.tol.rate_rel_slack);
  rep.rate_first_violation = rate.pass ? -1 : rate.first_violation;

  recompute_pass_flags(rep);
  return rep;
}

namespace {

struct KvWriter {
  std::ostringstream out;
  void put(const std::string& k, double v) { out << k << "=" << format_double(v) << "\n"; }
  void put(const std::string& k, int v) { out << k << "=" << v << "\n"; }
  void put(const std::string& k, bool v) { out << k << "=" << (v ? "true" : "false") << "\n"; }
};

}  // namespace

void write_report(const CertReport& rep, const std::string& path) {
  KvWriter w;
  w.put("h_theory", rep.h_theory);
  w.put("H_theory_paper", rep.H_theory_paper);
  w.put("H_theory_impl", rep.H_theory_impl);
  w.put("mu_linear", rep.mu_linear);
  w.put("mu_network", rep.mu_network);
  w.put("C_theory", rep.C_theory);
  w.put("rho_theory", rep.rho_theory);
  w.put("rate_bound", rep.rate_bound);
  w.put("eta", rep.eta);
  w.put("gamma", rep.gamma);
  w.put("max_grad_ratio", rep.max_grad_ratio);
  w.put("min_grad_ratio", rep.min_grad_ratio);
  w.put("max_hess_ratio", rep.max_hess_ratio);
  w.put("max_path_ratio", rep.max_path_ratio);
  w.put("rho_hat", rep.rho_hat);
  w.put("n_ratio_points", rep.n_ratio_points);
  w.put("n_hess_points", rep.n_hess_points);
  w.put("n_path_segments", rep.n_path_segments);
  w.put("sgc_trials", rep.sgc_trials);
  w.put("sgc_batch", rep.sgc_batch);
  w.put("rate_first_violation", rep.rate_first_violation);
  w.put("tol_grad_slack", rep.tol.grad_slack);
  w.put("tol_hess_rel_slack", rep.tol.hess_rel_slack);
  w.put("tol_path_slack", rep.tol.path_slack);
  w.put("tol_rate_rel_slack", rep.tol.rate_rel_slack);
  w.put("pass_grad_upper", rep.pass_grad_upper);
  w.put("pass_grad_lower", rep.pass_grad_lower);
  w.put("pass_hess_impl", rep.pass_hess_impl);
  w.put("pass_hess_paper", rep.pass_hess_paper);
  w.put("pass_path", rep.pass_path);
  w.put("pass_rate", rep.pass_rate);
  w.put("pass_sgc", rep.pass_sgc);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_report: cannot open " + path);
  out << w.out.str();
  if (!out) throw std::runtime_error("write_report: write failed for " + path);
}

CertReport read_report(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_report: cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected name=value");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto num = [&](const std::string& k) -> double {
    auto it = kv.find(k);
    if (it == kv.end()) throw std::runtime_error(path + ": missing key " + k);
    double v = 0.0;
    auto res = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (res.ec != std::errc()) throw std::runtime_error(path + ": bad value for key " + k);
    return v;
  };
  auto flag = [&](const std::string& k) -> bool {
    auto it = kv.find(k);
    if (it == kv.end()) throw std::runtime_error(path + ": missing key " + k);
    return it->second == "true";
  };
  CertReport rep;
  rep.h_theory = num("h_theory");
  rep.H_theory_paper = num("H_theory_paper");
  rep.H_theory_impl = num("H_theory_impl");
  rep.mu_linear = num("mu_linear");
  rep.mu_network = num("mu_network");
  rep.C_theory = num("C_theory");
  rep.rho_theory = num("rho_theory");
  rep.rate_bound = num("rate_bound");
  rep.eta = num("eta");
  rep.gamma = num("gamma");
  rep.max_grad_ratio = num("max_grad_ratio");
  rep.min_grad_ratio = num("min_grad_ratio");
  rep.max_hess_ratio = num("max_hess_ratio");
  rep.max_path_ratio = num("max_path_ratio");
  rep.rho_hat = num("rho_hat");
  rep.n_ratio_points = static_cast<int>(num("n_ratio_points"));
  rep.n_hess_points = static_cast<int>(num("n_hess_points"));
  rep.n_path_segments = static_cast<int>(num("n_path_segments"));
  rep.sgc_trials = static_cast<int>(num("sgc_trials"));
  rep.sgc_batch = static_cast<int>(num("sgc_batch"));
  rep.rate_first_violation = static_cast<int>(num("rate_first_violation"));
  rep.tol.grad_slack = num("tol_grad_slack");
  rep.tol.hess_rel_slack = num("tol_hess_rel_slack");
  rep.tol.path_slack = num("tol_path_slack");
  rep.tol.rate_rel_slack = num("tol_rate_rel_slack");
  rep.pass_grad_upper = flag("pass_grad_upper");
  rep.pass_grad_lower = flag("pass_grad_lower");
  rep.pass_hess_impl = flag("pass_hess_impl");
  rep.pass_hess_paper = flag("pass_hess_paper");
  rep.pass_path = flag("pass_path");
  rep.pass_rate = flag("pass_rate");
  rep.pass_sgc = flag("pass_sgc");
  return rep;
}

void write_ratio_csv(const std::string& path, const GradRatioStats& grad,
                     const HessRatioStats& hess, int n_random_points) {
  if (grad.ratios.size() != hess.ratios.size()) {
    throw std::invalid_argument("write_ratio_csv: ratio tables differ in length");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_ratio_csv: cannot open " + path);
  out << "point,source,grad_ratio,hess_ratio\n";
  for (size_t k = 0; k < grad.ratios.size(); ++k) {
    out << k << ',' << (static_cast<int>(k) < n_random_points ? "random" : "trajectory") << ','
        << format_double(grad.ratios[k]) << ',' << format_double(hess.ratios[k]) << "\n";
  }
  if (!out) throw std::runtime_error("write_ratio_csv: write failed for " + path);
}

}  // namespace ngd
