#include "ngdlab/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ngd {

namespace {

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

double loss_value(LossKind kind, double margin) {
  if (kind == LossKind::Exponential) return std::exp(-margin);
  return softplus(-margin);
}

double loss_d1(LossKind kind, double margin) {
  if (kind == LossKind::Exponential) return -std::exp(-margin);
  return -logistic(-margin);
}

double loss_d2(LossKind kind, double margin) {
  if (kind == LossKind::Exponential) return std::exp(-margin);
  double p = logistic(margin);
  return p * (1.0 - p);
}

double loss_lipschitz(LossKind kind) {
  if (kind == LossKind::Exponential) {
    throw std::domain_error("loss_lipschitz: exponential loss has unbounded derivative");
  }
  return 1.0;
}

double loss_smoothness(LossKind kind) {
  if (kind == LossKind::Exponential) {
    throw std::domain_error("loss_smoothness: exponential loss has unbounded curvature");
  }
  return 0.25;
}

Dataset Dataset::from_xy(Mat x, Vec labels) {
  if (x.rows != static_cast<int>(labels.size())) {
    throw std::invalid_argument("Dataset: label count must match row count");
  }
  if (x.rows == 0) throw std::invalid_argument("Dataset: empty");
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1.0 && labels[i] != -1.0) {
      throw std::invalid_argument("Dataset: label at sample " + std::to_string(i) +
                                  " is not in {-1, +1}");
    }
  }
  require_finite(x, "Dataset features");
  Dataset d;
  d.X = std::move(x);
  d.y = std::move(labels);
  d.radius = 0.0;
  for (int i = 0; i < d.X.rows; ++i) {
    d.radius = std::max(d.radius, norm2(d.X.row(i), d.X.cols));
  }
  return d;
}

uint64_t dataset_fingerprint(const Dataset& data) {
  uint64_t h = fnv1a_init();
  int64_t dims[2] = {data.n(), data.d()};
  fnv1a_add(h, dims, sizeof(dims));
  fnv1a_add(h, data.y.data(), data.y.size() * sizeof(double));
  fnv1a_add(h, data.X.a.data(), data.X.a.size() * sizeof(double));
  return h;
}

double linear_margin(const Dataset& data, const Vec& w_star) {
  if (static_cast<int>(w_star.size()) != data.d()) {
    throw std::invalid_argument("linear_margin: separator dimension mismatch");
  }
  double nw = norm2(w_star);
  if (nw == 0.0) throw std::invalid_argument("linear_margin: zero separator");
  double lo = std::numeric_limits<double>::infinity();
  for (int i = 0; i < data.n(); ++i) {
    double v = data.y[i] * dot(data.X.row(i), w_star.data(), data.d()) / nw;
    lo = std::min(lo, v);
  }
  return lo;
}

Objective::Objective(LossKind loss, Activation act, Vec second_layer, Dataset data)
    : loss_(loss), act_(act), a_(std::move(second_layer)), data_(std::move(data)) {
  if (a_.empty()) throw std::invalid_argument("Objective: empty second layer");
  double mag = 1.0 / static_cast<double>(a_.size());
  for (double aj : a_) {
    if (std::abs(std::abs(aj) - mag) > 1e-15 * mag) {
      throw std::invalid_argument("Objective: second-layer weights must be +-1/m");
    }
  }
}

void Objective::check_shape(const Mat& W) const {
  if (W.rows != m() || W.cols != d()) {
    throw std::invalid_argument("Objective: weight matrix must be m x d");
  }
}

Vec Objective::margins(const Mat& W) const {
  check_shape(W);
  int mm = m(), dd = d(), nn = n();
  Vec out(nn);
  for (int i = 0; i < nn; ++i) {
    const double* x = data_.X.row(i);
    double phi = 0.0;
    for (int j = 0; j < mm; ++j) {
      phi += a_[j] * act_.value(dot(W.row(j), x, dd));
    }
    out[i] = data_.y[i] * phi;
  }
  return out;
}

double log_mean_loss(LossKind kind, const Vec& margins) {
  size_t n = margins.size();
  if (kind == LossKind::Exponential) {
    double peak = -std::numeric_limits<double>::infinity();
    for (double mi : margins) peak = std::max(peak, -mi);
    if (!std::isfinite(peak)) {
      throw std::runtime_error("loss: non-finite margin");
    }
    CompensatedSum s;
    for (double mi : margins) s.add(std::exp(-mi - peak));
    return peak + std::log(s.value()) - std::log(static_cast<double>(n));
  }
  CompensatedSum s;
  for (double mi : margins) s.add(softplus(-mi));
  double total = s.value();
  if (total == 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(total) - std::log(static_cast<double>(n));
}

double Objective::log_loss(const Mat& W) const { return log_mean_loss(loss_, margins(W)); }

double Objective::loss_eval(const Mat& W) const {
  double lf = log_loss(W);
  double f = std::exp(lf);
  if (std::isinf(f)) {
    throw std::overflow_error("loss_eval: objective value overflows double precision");
  }
  return f;
}

void Objective::batch_value_grad(const Mat& W, std::span<const int> idx, double& log_f,
                                 Vec& grad) const {
  check_shape(W);
  if (idx.empty()) throw std::invalid_argument("batch_value_grad: empty batch");
  int mm = m(), dd = d();
  grad.assign(static_cast<size_t>(mm) * dd, 0.0);
  Vec u(mm), d1(mm);
  Vec marg(idx.size());
  double inv = 1.0 / static_cast<double>(idx.size());

  // One pass computes margins and caches nothing across samples; the
  // gradient weight f'(margin) is safe in double for any point the
  // optimizers visit (they stop before the loss passes 1e12).
  CompensatedSum value_acc;  // logistic only
  for (size_t k = 0; k < idx.size(); ++k) {
    int i = idx[k];
    if (i < 0 || i >= n()) throw std::invalid_argument("batch_value_grad: index out of range");
    const double* x = data_.X.row(i);
    double phi = 0.0;
    for (int j = 0; j < mm; ++j) {
      double v, dv;
      u[j] = dot(W.row(j), x, dd);
      act_.value_d1(u[j], v, dv);
      phi += a_[j] * v;
      d1[j] = dv;
    }
    double mi = data_.y[i] * phi;
    marg[k] = mi;
    double c = loss_d1(loss_, mi) * data_.y[i] * inv;
    for (int j = 0; j < mm; ++j) {
      axpy(c * a_[j] * d1[j], x, grad.data() + static_cast<size_t>(j) * dd, dd);
    }
    if (loss_ == LossKind::Logistic) value_acc.add(softplus(-mi));
  }
  if (loss_ == LossKind::Exponential) {
    log_f = log_mean_loss(loss_, marg);
  } else {
    double total = value_acc.value();
    log_f = total == 0.0 ? -std::numeric_limits<double>::infinity()
                         : std::log(total) - std::log(static_cast<double>(idx.size()));
  }
}

void Objective::loss_value_grad(const Mat& W, double& log_f, Vec& grad) const {
  static thread_local std::vector<int> all;
  if (static_cast<int>(all.size()) != n()) {
    all.resize(n());
    for (int i = 0; i < n(); ++i) all[i] = i;
  }
  batch_value_grad(W, all, log_f, grad);
}

Vec Objective::loss_grad(const Mat& W) const {
  double lf;
  Vec g;
  loss_value_grad(W, lf, g);
  return g;
}

Vec Objective::loss_hvp(const Mat& W, const Vec& v) const {
  return HessianOperator(*this, W).apply(v);
}

double Objective::train_error(const Mat& W) const {
  check_shape(W);
  Vec marg = margins(W);
  int errs = 0;
  for (int i = 0; i < n(); ++i) {
    // margin = y * Phi, so "correct" means margin > 0; Phi = 0 is an error.
    if (!(marg[i] > 0.0)) ++errs;
  }
  return static_cast<double>(errs) / static_cast<double>(n());
}

double Objective::network_margin(const Mat& W) const {
  double nw = frobenius_norm(W);
  if (nw == 0.0) throw std::invalid_argument("network_margin: zero weights");
  Vec marg = margins(W);
  double lo = std::numeric_limits<double>::infinity();
  for (double mi : marg) lo = std::min(lo, mi);
  return lo / nw;
}

double Objective::error_on(const Mat& W, const Dataset& test) const {
  if (test.d() != d()) throw std::invalid_argument("error_on: dimension mismatch");
  check_shape(W);
  int mm = m(), dd = d();
  int errs = 0;
  for (int i = 0; i < test.n(); ++i) {
    const double* x = test.X.row(i);
    double phi = 0.0;
    for (int j = 0; j < mm; ++j) phi += a_[j] * act_.value(dot(W.row(j), x, dd));
    if (!(test.y[i] * phi > 0.0)) ++errs;
  }
  return static_cast<double>(errs) / static_cast<double>(test.n());
}

double Objective::loss_on(const Mat& W, const Dataset& test) const {
  if (test.d() != d()) throw std::invalid_argument("loss_on: dimension mismatch");
  check_shape(W);
  int mm = m(), dd = d();
  Vec marg(test.n());
  for (int i = 0; i < test.n(); ++i) {
    const double* x = test.X.row(i);
    double phi = 0.0;
    for (int j = 0; j < mm; ++j) phi += a_[j] * act_.value(dot(W.row(j), x, dd));
    marg[i] = test.y[i] * phi;
  }
  return std::exp(log_mean_loss(loss_, marg));
}

Objective NetSpec::bind(LossKind loss, Dataset data) const {
  Rng rng(sign_seed, /*stream=*/2);
  return Objective(loss, act, second_layer_signs(m, signs, rng), std::move(data));
}

HessianOperator::HessianOperator(const Objective& obj, const Mat& W) : obj_(obj) {
  if (!obj.act().smooth()) {
    throw std::domain_error("loss_hvp: Hessian undefined for leaky-relu activation");
  }
  if (W.rows != obj.m() || W.cols != obj.d()) {
    throw std::invalid_argument("HessianOperator: weight matrix must be m x d");
  }
  int mm = obj.m(), dd = obj.d(), nn = obj.n();
  dim_ = mm * dd;
  s1_.resize(static_cast<size_t>(nn) * mm);
  s2_.resize(static_cast<size_t>(nn) * mm);
  f2_.resize(nn);
  const Dataset& data = obj.data();
  double inv = 1.0 / static_cast<double>(nn);
  for (int i = 0; i < nn; ++i) {
    const double* x = data.X.row(i);
    double phi = 0.0;
    for (int j = 0; j < mm; ++j) {
      ActEval e = obj.act().eval(dot(W.row(j), x, dd));
      phi += obj.second_layer()[j] * e.value;
      s1_[static_cast<size_t>(i) * mm + j] = obj.second_layer()[j] * e.d1;
      s2_[static_cast<size_t>(i) * mm + j] = obj.second_layer()[j] * e.d2;
    }
    double mi = data.y[i] * phi;
    double f1 = loss_d1(obj.loss(), mi);
    f2_[i] = loss_d2(obj.loss(), mi) * inv;
    for (int j = 0; j < mm; ++j) {
      s2_[static_cast<size_t>(i) * mm + j] *= f1 * data.y[i] * inv;
    }
  }
}

void HessianOperator::apply(const Vec& v, Vec& out) const {
  if (static_cast<int>(v.size()) != dim_) {
    throw std::invalid_argument("HessianOperator: direction dimension mismatch");
  }
  int mm = obj_.m(), dd = obj_.d(), nn = obj_.n();
  out.assign(dim_, 0.0);
  Vec xv(mm);
  const Dataset& data = obj_.data();
  for (int i = 0; i < nn; ++i) {
    const double* x = data.X.row(i);
    const double* s1 = s1_.data() + static_cast<size_t>(i) * mm;
    const double* s2 = s2_.data() + static_cast<size_t>(i) * mm;
    double p = 0.0;
    for (int j = 0; j < mm; ++j) {
      xv[j] = dot(x, v.data() + static_cast<size_t>(j) * dd, dd);
      p += s1[j] * xv[j];
    }
    double fp = f2_[i] * p;
    for (int j = 0; j < mm; ++j) {
      double c = fp * s1[j] + s2[j] * xv[j];
      if (c != 0.0) axpy(c, x, out.data() + static_cast<size_t>(j) * dd, dd);
    }
  }
}

Vec HessianOperator::apply(const Vec& v) const {
  Vec out;
  apply(v, out);
  return out;
}

}  // namespace ngd
