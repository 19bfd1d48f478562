#include "ngdlab/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace ngd {

double dot(const double* x, const double* y, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double dot(const Vec& x, const Vec& y) {
  if (x.size() != y.size()) throw std::invalid_argument("dot: size mismatch");
  return dot(x.data(), y.data(), static_cast<int>(x.size()));
}

double norm2(const double* x, int n) { return std::sqrt(dot(x, x, n)); }

double norm2(const Vec& x) { return norm2(x.data(), static_cast<int>(x.size())); }

double frobenius_norm(const Mat& w) { return norm2(w.a); }

void axpy(double c, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += c * x[i];
}

void axpy(double c, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
  axpy(c, x.data(), y.data(), static_cast<int>(x.size()));
}

void scale(Vec& x, double c) {
  for (double& v : x) v *= c;
}

void require_finite(const Vec& x, const std::string& what) {
  for (size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw std::runtime_error(what + ": non-finite entry at index " + std::to_string(i));
    }
  }
}

void require_finite(const Mat& w, const std::string& what) { require_finite(w.a, what); }

void CompensatedSum::add(double v) {
  double t = sum + v;
  if (std::abs(sum) >= std::abs(v)) {
    comp += (sum - t) + v;
  } else {
    comp += (v - t) + sum;
  }
  sum = t;
}

Rng::Rng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {
  std::seed_seq seq{static_cast<uint32_t>(seed & 0xffffffffu),
                    static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(stream & 0xffffffffu),
                    static_cast<uint32_t>(stream >> 32)};
  gen_.seed(seq);
}

uint64_t Rng::next_u64() { return gen_(); }

double Rng::uniform01() {
  // 53-bit mantissa: exact dyadic rationals in [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform01() - 1.0;
    v = 2.0 * uniform01() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  have_spare_ = true;
  return u * f;
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  uint64_t un = static_cast<uint64_t>(n);
  uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t u;
  do {
    u = next_u64();
  } while (u >= limit);
  return static_cast<int>(u % un);
}

Vec Rng::normal_vec(int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = normal();
  return v;
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
  if (k < 0 || k > n) throw std::invalid_argument("sample_without_replacement: need 0 <= k <= n");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    int j = i + uniform_int(n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

PowerIterResult power_iteration(const std::function<void(const Vec&, Vec&)>& apply,
                                int dim, double tol, int max_iter, Rng& rng) {
  if (dim <= 0) throw std::invalid_argument("power_iteration: dim must be positive");
  if (tol <= 0) throw std::invalid_argument("power_iteration: tol must be positive");

  Vec v = rng.normal_vec(dim);
  double nv = norm2(v);
  while (nv == 0.0) {  // astronomically unlikely; retry keeps the contract
    v = rng.normal_vec(dim);
    nv = norm2(v);
  }
  scale(v, 1.0 / nv);

  Vec w(dim, 0.0);
  PowerIterResult res;
  double prev = 0.0;
  for (int k = 1; k <= max_iter; ++k) {
    apply(v, w);
    double lam = dot(v, w);  // Rayleigh quotient, v is unit
    double nw = norm2(w);
    res.iters = k;
    res.value = std::abs(lam);
    if (nw == 0.0) {  // zero map
      res.value = 0.0;
      res.converged = true;
      return res;
    }
    if (k >= 2 && std::abs(lam - prev) <= tol * std::max(std::abs(lam), 1e-300)) {
      res.converged = true;
      return res;
    }
    prev = lam;
    for (int i = 0; i < dim; ++i) v[i] = w[i] / nw;
  }
  return res;  // converged = false, last estimate kept
}

Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& w, double step) {
  if (step <= 0) throw std::invalid_argument("fd_gradient: step must be positive");
  Vec g(w.size());
  Vec p = w;
  for (size_t i = 0; i < w.size(); ++i) {
    double wi = w[i];
    p[i] = wi + step;
    double fp = f(p);
    p[i] = wi - step;
    double fm = f(p);
    p[i] = wi;
    g[i] = (fp - fm) / (2.0 * step);
    if (!std::isfinite(g[i])) {
      throw std::runtime_error("fd_gradient: non-finite difference at coordinate " +
                               std::to_string(i));
    }
  }
  return g;
}

LinearFit fit_linear(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("fit_linear: need two equal-length samples");
  }
  size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double dx = x[i] - mx;
    double dy = y[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  LinearFit fit;
  if (sxx == 0.0) throw std::invalid_argument("fit_linear: degenerate abscissa");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (syy == 0.0) {
    fit.r2 = 1.0;  // constant data fit exactly by slope 0
  } else {
    fit.r2 = (sxy * sxy) / (sxx * syy);
  }
  return fit;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr err;
  std::mutex err_mu;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (int i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

int hardware_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

uint64_t fnv1a_init() { return 1469598103934665603ull; }

void fnv1a_add(uint64_t& h, const void* data, size_t len) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
}

}  // namespace ngd
