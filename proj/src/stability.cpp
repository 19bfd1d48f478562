#include "ngdlab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace ngd {

ConvexObjective::ConvexObjective(LossKind loss, Mat feats, Vec y)
    : loss_(loss), feats_(std::move(feats)), y_(std::move(y)) {
  if (feats_.rows != static_cast<int>(y_.size()) || feats_.rows == 0) {
    throw std::invalid_argument("ConvexObjective: feature/label shape mismatch");
  }
  for (int i = 0; i < feats_.rows; ++i) {
    feature_radius_ = std::max(feature_radius_, norm2(feats_.row(i), feats_.cols));
  }
}

ConvexObjective ConvexObjective::linear(LossKind loss, Dataset data) {
  return ConvexObjective(loss, std::move(data.X), std::move(data.y));
}

ConvexObjective ConvexObjective::random_features(LossKind loss, Dataset data, int width,
                                                 const Activation& act, SignScheme signs,
                                                 uint64_t seed) {
  if (width <= 0) throw std::invalid_argument("random_features: width must be positive");
  Rng rng(seed, /*stream=*/3);
  Mat a = init_weights(width, data.d(), InitKind::GaussianRowNormalized, rng);
  Rng sign_rng(seed, /*stream=*/4);
  Vec s = second_layer_signs(width, signs, sign_rng);
  Mat feats(data.n(), width);
  for (int i = 0; i < data.n(); ++i) {
    const double* x = data.X.row(i);
    double* f = feats.row(i);
    for (int j = 0; j < width; ++j) {
      f[j] = s[j] * act.value(dot(a.row(j), x, data.d()));
    }
  }
  ConvexObjective obj(loss, std::move(feats), std::move(data.y));
  obj.rf_a_ = std::move(a);
  obj.rf_act_ = act;
  obj.rf_signs_ = std::move(s);
  return obj;
}

ConvexObjective ConvexModelSpec::build(Dataset data) const {
  if (kind == ConvexKind::Linear) return ConvexObjective::linear(loss, std::move(data));
  if (!rf_act.has_value() || rf_width <= 0) {
    throw std::invalid_argument("convex model: random features need rf_width and rf_act");
  }
  return ConvexObjective::random_features(loss, std::move(data), rf_width, *rf_act, rf_signs,
                                          rf_seed);
}

Vec ConvexObjective::sample_margins(const Mat& w, std::span<const int> idx) const {
  if (w.rows != 1 || w.cols != feats_.cols) {
    throw std::invalid_argument("ConvexObjective: weights must be 1 x dim");
  }
  Vec marg(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) {
    int i = idx[k];
    marg[k] = y_[i] * dot(feats_.row(i), w.row(0), feats_.cols);
  }
  return marg;
}

void ConvexObjective::batch_value_grad(const Mat& w, std::span<const int> idx, double& log_f,
                                       Vec& g) const {
  if (idx.empty()) throw std::invalid_argument("ConvexObjective: empty batch");
  if (w.rows != 1 || w.cols != feats_.cols) {
    throw std::invalid_argument("ConvexObjective: weights must be 1 x dim");
  }
  g.assign(feats_.cols, 0.0);
  Vec marg(idx.size());
  double inv = 1.0 / static_cast<double>(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) {
    int i = idx[k];
    if (i < 0 || i >= feats_.rows) {
      throw std::invalid_argument("ConvexObjective: index out of range");
    }
    double mi = y_[i] * dot(feats_.row(i), w.row(0), feats_.cols);
    marg[k] = mi;
    axpy(loss_d1(loss_, mi) * y_[i] * inv, feats_.row(i), g.data(), feats_.cols);
  }
  log_f = log_mean_loss(loss_, marg);
}

void ConvexObjective::value_grad(const Mat& w, double& log_f, Vec& g) const {
  static thread_local std::vector<int> all;
  if (static_cast<int>(all.size()) != feats_.rows) {
    all.resize(feats_.rows);
    for (int i = 0; i < feats_.rows; ++i) all[i] = i;
  }
  batch_value_grad(w, all, log_f, g);
}

double ConvexObjective::log_loss(const Mat& w) const {
  std::vector<int> all(feats_.rows);
  for (int i = 0; i < feats_.rows; ++i) all[i] = i;
  return log_mean_loss(loss_, sample_margins(w, all));
}

double ConvexObjective::train_error(const Mat& w) const {
  std::vector<int> all(feats_.rows);
  for (int i = 0; i < feats_.rows; ++i) all[i] = i;
  Vec marg = sample_margins(w, all);
  int errs = 0;
  for (double mi : marg) {
    if (!(mi > 0.0)) ++errs;
  }
  return static_cast<double>(errs) / static_cast<double>(feats_.rows);
}

uint64_t ConvexObjective::fingerprint() const {
  uint64_t h = fnv1a_init();
  int64_t dims[2] = {feats_.rows, feats_.cols};
  fnv1a_add(h, dims, sizeof(dims));
  fnv1a_add(h, y_.data(), y_.size() * sizeof(double));
  fnv1a_add(h, feats_.a.data(), feats_.a.size() * sizeof(double));
  return h;
}

double ConvexObjective::lipschitz_G() const { return loss_lipschitz(loss_) * feature_radius_; }

double ConvexObjective::smoothness() const {
  return loss_smoothness(loss_) * feature_radius_ * feature_radius_;
}

Vec ConvexObjective::grad(const Mat& w) const {
  double lf;
  Vec g;
  value_grad(w, lf, g);
  return g;
}

void ConvexObjective::loo_value_grad(const Mat& w, int skip, double& log_f, Vec& g) const {
  int n = feats_.rows;
  if (n < 2) throw std::invalid_argument("leave-one-out is degenerate for n = 1");
  if (skip < 0 || skip >= n) throw std::invalid_argument("loo: held-out index out of range");
  std::vector<int> idx;
  idx.reserve(n - 1);
  for (int i = 0; i < n; ++i) {
    if (i != skip) idx.push_back(i);
  }
  batch_value_grad(w, idx, log_f, g);
  // The leave-one-out loss keeps the 1/n normalization, so rescale the
  // 1/(n-1)-scaled batch quantities.
  double fix = static_cast<double>(n - 1) / static_cast<double>(n);
  scale(g, fix);
  log_f += std::log(fix);
}

Vec ConvexObjective::featurize(const Vec& x) const {
  if (!rf_a_.has_value()) return x;
  int width = rf_a_->rows;
  Vec f(width);
  for (int j = 0; j < width; ++j) {
    f[j] = rf_signs_[j] * rf_act_->value(dot(rf_a_->row(j), x.data(), rf_a_->cols));
  }
  return f;
}

double ConvexObjective::loss_on(const Mat& w, const Dataset& test) const {
  Vec marg(test.n());
  for (int i = 0; i < test.n(); ++i) {
    Vec x(test.X.row(i), test.X.row(i) + test.d());
    Vec f = featurize(x);
    marg[i] = test.y[i] * dot(f.data(), w.row(0), static_cast<int>(f.size()));
  }
  return std::exp(log_mean_loss(loss_, marg));
}

double ConvexObjective::error_on(const Mat& w, const Dataset& test) const {
  int errs = 0;
  for (int i = 0; i < test.n(); ++i) {
    Vec x(test.X.row(i), test.X.row(i) + test.d());
    Vec f = featurize(x);
    double phi = dot(f.data(), w.row(0), static_cast<int>(f.size()));
    if (!(test.y[i] * phi > 0.0)) ++errs;
  }
  return static_cast<double>(errs) / static_cast<double>(test.n());
}

double ConvexObjective::margin_proxy(const Mat& w, const Dataset& test) const {
  double nw = norm2(w.a);
  if (nw == 0.0) return 0.0;
  double lo = std::numeric_limits<double>::infinity();
  for (int i = 0; i < test.n(); ++i) {
    Vec x(test.X.row(i), test.X.row(i) + test.d());
    Vec f = featurize(x);
    lo = std::min(lo, std::abs(dot(f.data(), w.row(0), static_cast<int>(f.size()))) / nw);
  }
  return lo;
}

NonexpansiveResult check_nonexpansive(const ConvexObjective& obj, int pairs, Rng& rng,
                                      double rel_slack) {
  double h = obj.self_bound_h();
  if (h > 1.0 + 1e-12) {
    throw std::invalid_argument(
        "check_nonexpansive: needs h <= 1; rescale the data until the feature radius is <= 1");
  }
  const double radii[3] = {0.1, 1.0, 10.0};
  NonexpansiveResult res;
  res.pairs = pairs;
  int dim = obj.dim();
  for (int k = 0; k < pairs; ++k) {
    Mat w(1, dim), v(1, dim);
    double rw = radii[rng.uniform_int(3)];
    double rv = radii[rng.uniform_int(3)];
    w.a = rng.normal_vec(dim);
    v.a = rng.normal_vec(dim);
    double nw = norm2(w.a), nv = norm2(v.a);
    if (nw == 0.0 || nv == 0.0) continue;
    scale(w.a, rw / nw);
    scale(v.a, rv / nv);
    double fw = obj.value(w), fv = obj.value(v);
    double eta = 0.99 / (h * std::max(fw, fv));
    Vec gw = obj.grad(w), gv = obj.grad(v);
    double lhs2 = 0.0, rhs2 = 0.0;
    for (int i = 0; i < dim; ++i) {
      double du = (w.a[i] - eta * gw[i]) - (v.a[i] - eta * gv[i]);
      double dv = w.a[i] - v.a[i];
      lhs2 += du * du;
      rhs2 += dv * dv;
    }
    if (rhs2 == 0.0) continue;
    double ratio = std::sqrt(lhs2 / rhs2);
    res.max_ratio = std::max(res.max_ratio, ratio);
    if (ratio > 1.0 + rel_slack) ++res.violations;
  }
  return res;
}

LooRun run_loo(const ConvexObjective& obj, const RunResult& full, int held_out) {
  int n = obj.n_samples();
  if (n < 2) throw std::invalid_argument("run_loo: leave-one-out is degenerate for n = 1");
  if (held_out < 0 || held_out >= n) {
    throw std::invalid_argument("run_loo: held-out index out of range");
  }
  if (full.iterates.empty()) {
    throw std::invalid_argument("run_loo: full run must keep its iterates");
  }
  size_t steps = full.eta_steps.size();
  if (full.iterates.size() != steps + 1) {
    throw std::invalid_argument("run_loo: inconsistent full-run trajectory");
  }
  double h = obj.self_bound_h();

  LooRun loo;
  loo.held_out = held_out;
  loo.eta_steps = full.eta_steps;
  Mat w_loo = full.iterates.front();  // shared initialization
  double cum = 0.0;
  Vec g;
  for (size_t t = 0; t <= steps; ++t) {
    const Mat& w_full = full.iterates[t];
    double diff2 = 0.0;
    for (size_t i = 0; i < w_loo.a.size(); ++i) {
      double d = w_loo.a[i] - w_full.a[i];
      diff2 += d * d;
    }
    loo.dist.push_back(std::sqrt(diff2));
    loo.cum_bound.push_back(cum);
    double lf_at_loo, lf_at_full;
    obj.loo_value_grad(w_loo, held_out, lf_at_loo, g);
    {
      Vec tmp;
      obj.loo_value_grad(w_full, held_out, lf_at_full, tmp);
    }
    loo.delta_hat.push_back(std::exp(lf_at_loo - lf_at_full));
    if (t == steps) break;
    double eta_t = full.eta_steps[t];
    axpy(-eta_t, g, w_loo.a);
    cum += h / static_cast<double>(n) * eta_t * full.trace[t].loss;
  }
  loo.max_delta = *std::max_element(loo.delta_hat.begin(), loo.delta_hat.end());
  loo.max_dist_excess = -std::numeric_limits<double>::infinity();
  for (size_t t = 0; t < loo.dist.size(); ++t) {
    loo.max_dist_excess = std::max(loo.max_dist_excess, loo.dist[t] - loo.cum_bound[t]);
  }
  return loo;
}

LooExperiment run_all_loo(const ConvexObjective& obj, const OptimizerConfig& cfg, int workers) {
  if (cfg.kind != OptKind::Ngd) throw std::invalid_argument("run_all_loo: config kind must be ngd");
  OptimizerConfig full_cfg = cfg;
  full_cfg.keep_iterates = true;
  full_cfg.log_every = 1;
  LooExperiment exp;
  exp.full = run_ngd(obj, full_cfg);
  exp.h = obj.self_bound_h();
  exp.runs.resize(obj.n_samples());
  parallel_for(obj.n_samples(), workers,
               [&](int i) { exp.runs[i] = run_loo(obj, exp.full, i); });
  for (const LooRun& r : exp.runs) exp.max_delta = std::max(exp.max_delta, r.max_delta);
  return exp;
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t x = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

GapEstimate estimate_gap(const GapConfig& cfg) {
  if (cfg.trials < 1) throw std::invalid_argument("estimate_gap: trials must be >= 1");
  GenSpec dist = cfg.dist;
  if (dist.kind == GenKind::PlantedMarginLinear) {
    dist.w_star = resolve_separator(dist);  // one distribution across trials
  }
  GapEstimate est;
  est.trials = cfg.trials;
  est.n = dist.n;
  est.T = cfg.opt.T;
  est.rows.resize(cfg.trials);
  std::vector<double> slopes(cfg.trials, 0.0), r2s(cfg.trials, 1.0), proxies(cfg.trials, 0.0);
  std::vector<double> train_losses(cfg.trials), test_losses(cfg.trials), test_errs(cfg.trials);

  parallel_for(cfg.trials, cfg.workers, [&](int k) {
    GenSpec train_spec = dist;
    train_spec.seed = mix_seed(cfg.master_seed, 2 * static_cast<uint64_t>(k));
    GenSpec test_spec = dist;
    test_spec.n = cfg.test_size;
    test_spec.seed = mix_seed(cfg.master_seed, 2 * static_cast<uint64_t>(k) + 1);
    Dataset train = generate(train_spec);
    Dataset test = generate(test_spec);
    ConvexObjective obj = cfg.model.build(std::move(train));

    OptimizerConfig opt = cfg.opt;
    opt.kind = OptKind::Ngd;
    opt.seed = mix_seed(cfg.master_seed, 1000000 + static_cast<uint64_t>(k));
    opt.keep_iterates = false;
    opt.log_every = 1;
    RunResult run = run_ngd(obj, opt);

    double train_loss = std::exp(obj.log_loss(run.final_w));
    double test_loss = obj.loss_on(run.final_w, test);
    GapTrialRow row;
    row.trial = k;
    row.n = train_spec.n;
    row.T = opt.T;
    row.train_loss = train_loss;
    row.test_loss = test_loss;
    row.test_err = obj.error_on(run.final_w, test);
    row.gap = test_loss - train_loss;
    est.rows[k] = row;
    train_losses[k] = train_loss;
    test_losses[k] = test_loss;
    test_errs[k] = row.test_err;
    proxies[k] = obj.margin_proxy(run.final_w, test);

    if (run.trace.size() >= 4) {
      size_t half = run.trace.size() / 2;
      std::vector<double> ts, ws;
      for (size_t i = half; i < run.trace.size(); ++i) {
        ts.push_back(static_cast<double>(run.trace[i].t));
        ws.push_back(run.trace[i].w_norm);
      }
      LinearFit fit = fit_linear(ts, ws);
      slopes[k] = fit.slope;
      r2s[k] = fit.r2;
    }
  });

  CompensatedSum gap_acc, train_acc, test_acc, err_acc, slope_acc, r2_acc, proxy_acc;
  for (int k = 0; k < cfg.trials; ++k) {
    gap_acc.add(est.rows[k].gap);
    train_acc.add(train_losses[k]);
    test_acc.add(test_losses[k]);
    err_acc.add(test_errs[k]);
    slope_acc.add(slopes[k]);
    r2_acc.add(r2s[k]);
    proxy_acc.add(proxies[k]);
  }
  double inv = 1.0 / static_cast<double>(cfg.trials);
  est.mean_gap = gap_acc.value() * inv;
  est.mean_train_loss = train_acc.value() * inv;
  est.mean_test_loss = test_acc.value() * inv;
  est.mean_test_error = err_acc.value() * inv;
  est.weight_slope = slope_acc.value() * inv;
  est.weight_r2 = r2_acc.value() * inv;
  est.margin_proxy = proxy_acc.value() * inv;

  // Bound constants come from a representative trial model (the feature
  // radius is data-dependent only through the shared r_max rescaling).
  GenSpec probe_spec = dist;
  probe_spec.seed = mix_seed(cfg.master_seed, 0);
  ConvexObjective probe = cfg.model.build(generate(probe_spec));
  try {
    est.G = probe.lipschitz_G();
    est.bound_lipschitz =
        2.0 * est.G * static_cast<double>(cfg.opt.T) / static_cast<double>(dist.n);
  } catch (const std::domain_error&) {
    est.G = std::numeric_limits<double>::quiet_NaN();
    est.bound_lipschitz = std::numeric_limits<double>::quiet_NaN();
  }
  try {
    est.smoothness = probe.smoothness();
    est.bound_smooth = 4.0 * est.mean_train_loss + 3.0 * est.smoothness * est.smoothness *
                                                       static_cast<double>(cfg.opt.T) /
                                                       static_cast<double>(dist.n);
  } catch (const std::domain_error&) {
    est.smoothness = std::numeric_limits<double>::quiet_NaN();
    est.bound_smooth = std::numeric_limits<double>::quiet_NaN();
  }
  return est;
}

void write_gap_csv(const GapEstimate& est, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_gap_csv: cannot open " + path);
  out << "trial,n,T,train_loss,test_loss,test_err,gap\n";
  for (const GapTrialRow& r : est.rows) {
    out << r.trial << ',' << r.n << ',' << r.T << ',' << format_double(r.train_loss) << ','
        << format_double(r.test_loss) << ',' << format_double(r.test_err) << ','
        << format_double(r.gap) << "\n";
  }
  if (!out) throw std::runtime_error("write_gap_csv: write failed for " + path);
}

ScalingResult test_error_scaling(const GenSpec& dist, const NetSpec& net, LossKind loss,
                                 const OptimizerConfig& base, int trials, int test_size,
                                 uint64_t master_seed, int workers) {
  if (trials < 1) throw std::invalid_argument("test_error_scaling: trials must be >= 1");
  GenSpec d0 = dist;
  if (d0.kind == GenKind::PlantedMarginLinear) d0.w_star = resolve_separator(d0);

  ScalingResult res;
  res.rows.resize(trials);
  std::vector<double> errs(trials), slopes(trials, 0.0), r2s(trials, 1.0), proxies(trials, 0.0);
  std::vector<double> reg_ft(trials), reg_n(trials);

  parallel_for(trials, workers, [&](int k) {
    GenSpec train_spec = d0;
    train_spec.n = (k / 2) % 2 == 0 ? d0.n : std::max(2, d0.n / 2);
    train_spec.seed = mix_seed(master_seed, 2 * static_cast<uint64_t>(k));
    GenSpec test_spec = d0;
    test_spec.n = test_size;
    test_spec.seed = mix_seed(master_seed, 2 * static_cast<uint64_t>(k) + 1);
    Dataset train = generate(train_spec);
    Dataset test = generate(test_spec);
    Objective obj = net.bind(loss, std::move(train));
    ObjectiveModel model(obj);

    OptimizerConfig opt = base;
    opt.kind = OptKind::Ngd;
    opt.T = k % 2 == 0 ? base.T : std::max(1, base.T / 2);
    opt.seed = mix_seed(master_seed, 500000 + static_cast<uint64_t>(k));
    opt.keep_iterates = false;
    RunResult run = run_ngd(model, opt);

    double f_T = std::exp(obj.log_loss(run.final_w));
    GapTrialRow row;
    row.trial = k;
    row.n = train_spec.n;
    row.T = opt.T;
    row.train_loss = f_T;
    row.test_loss = obj.loss_on(run.final_w, test);
    row.test_err = obj.error_on(run.final_w, test);
    row.gap = row.test_loss - row.train_loss;
    res.rows[k] = row;
    errs[k] = row.test_err;
    reg_ft[k] = f_T / static_cast<double>(opt.T);
    reg_n[k] = 1.0 / static_cast<double>(train_spec.n);

    if (run.trace.size() >= 4) {
      size_t half = run.trace.size() / 2;
      std::vector<double> ts, ws;
      for (size_t i = half; i < run.trace.size(); ++i) {
        ts.push_back(static_cast<double>(run.trace[i].t));
        ws.push_back(run.trace[i].w_norm);
      }
      LinearFit fit = fit_linear(ts, ws);
      slopes[k] = fit.slope;
      r2s[k] = fit.r2;
    }
    double nw = frobenius_norm(run.final_w);
    if (nw > 0.0) {
      double lo = std::numeric_limits<double>::infinity();
      for (int i = 0; i < test.n(); ++i) {
        Vec x(test.X.row(i), test.X.row(i) + test.d());
        TwoLayerNet probe(run.final_w, obj.second_layer(), obj.act());
        lo = std::min(lo, std::abs(forward(probe, x)) / nw);
      }
      proxies[k] = lo;
    }
  });

  CompensatedSum err_acc, slope_acc, r2_acc, proxy_acc;
  for (int k = 0; k < trials; ++k) {
    err_acc.add(errs[k]);
    slope_acc.add(slopes[k]);
    r2_acc.add(r2s[k]);
    proxy_acc.add(proxies[k]);
  }
  res.mean_test_error = err_acc.value() / trials;
  res.weight_slope = slope_acc.value() / trials;
  res.weight_r2 = r2_acc.value() / trials;
  res.margin_proxy = proxy_acc.value() / trials;

  // 2x2 normal equations for err ~ c1 * F_T/T + c2 / n.
  double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
  for (int k = 0; k < trials; ++k) {
    a11 += reg_ft[k] * reg_ft[k];
    a12 += reg_ft[k] * reg_n[k];
    a22 += reg_n[k] * reg_n[k];
    b1 += reg_ft[k] * errs[k];
    b2 += reg_n[k] * errs[k];
  }
  double det = a11 * a22 - a12 * a12;
  if (std::abs(det) > 1e-300) {
    res.c1 = (b1 * a22 - b2 * a12) / det;
    res.c2 = (a11 * b2 - a12 * b1) / det;
  }
  return res;
}

}  // namespace ngd
