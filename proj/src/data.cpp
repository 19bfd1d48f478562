#include "ngdlab/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ngd {

Vec resolve_separator(const GenSpec& spec) {
  if (!spec.w_star.empty()) {
    if (static_cast<int>(spec.w_star.size()) != spec.d) {
      throw std::invalid_argument("gen: w_star dimension mismatch");
    }
    double nw = norm2(spec.w_star);
    if (nw == 0.0) throw std::invalid_argument("gen: zero separator");
    Vec w = spec.w_star;
    scale(w, 1.0 / nw);
    return w;
  }
  Rng rng(spec.seed, /*stream=*/100);
  Vec w = rng.normal_vec(spec.d);
  double nw = norm2(w);
  while (nw == 0.0) {
    w = rng.normal_vec(spec.d);
    nw = norm2(w);
  }
  scale(w, 1.0 / nw);
  return w;
}

static Dataset generate_planted(const GenSpec& spec) {
  if (!(spec.gamma < spec.r_max)) {
    throw std::invalid_argument("gen: infeasible planted spec (gamma >= r_max)");
  }
  Vec w = resolve_separator(spec);
  Rng rng(spec.seed, /*stream=*/0);
  Mat x(spec.n, spec.d);
  Vec y(spec.n);
  for (int i = 0; i < spec.n; ++i) {
    double* row = x.row(i);
    double proj = 0.0;
    // Uniform on the radius r_max sphere, points inside the margin band
    // resampled. Sequential per-point rejection keeps prefixes stable.
    for (;;) {
      double n2 = 0.0;
      do {
        for (int k = 0; k < spec.d; ++k) row[k] = rng.normal();
        n2 = norm2(row, spec.d);
      } while (n2 == 0.0);
      for (int k = 0; k < spec.d; ++k) row[k] *= spec.r_max / n2;
      proj = dot(row, w.data(), spec.d);
      if (std::abs(proj) >= spec.gamma) break;
    }
    y[i] = proj > 0.0 ? 1.0 : -1.0;
  }
  // Margins are sign-symmetric, so flipping a point across the separator
  // fixes an empty class without touching the margin guarantee.
  bool has_pos = false, has_neg = false;
  for (int i = 0; i < spec.n; ++i) (y[i] > 0 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) {
    for (int k = 0; k < spec.d; ++k) x.row(0)[k] = -x.row(0)[k];
    y[0] = -y[0];
  }
  return Dataset::from_xy(std::move(x), std::move(y));
}

static Dataset generate_mixture(const GenSpec& spec) {
  if (!spec.mean_pos.empty() && static_cast<int>(spec.mean_pos.size()) != spec.d) {
    throw std::invalid_argument("gen: mean_pos dimension mismatch");
  }
  if (!spec.mean_neg.empty() && static_cast<int>(spec.mean_neg.size()) != spec.d) {
    throw std::invalid_argument("gen: mean_neg dimension mismatch");
  }
  if (!(spec.cov_pos > 0.0) || !(spec.cov_neg > 0.0)) {
    throw std::invalid_argument("gen: covariance scales must be positive");
  }
  Rng rng(spec.seed, /*stream=*/0);
  int n_pos = (spec.n + 1) / 2;  // odd n gives the extra point to +1
  Mat x(spec.n, spec.d);
  Vec y(spec.n);
  for (int i = 0; i < spec.n; ++i) {
    bool pos = i < n_pos;
    double sd = std::sqrt(pos ? spec.cov_pos : spec.cov_neg);
    const Vec& mean = pos ? spec.mean_pos : spec.mean_neg;
    double* row = x.row(i);
    for (int k = 0; k < spec.d; ++k) {
      row[k] = (mean.empty() ? 0.0 : mean[k]) + sd * rng.normal();
    }
    y[i] = pos ? 1.0 : -1.0;
  }
  double radius = 0.0;
  for (int i = 0; i < spec.n; ++i) radius = std::max(radius, norm2(x.row(i), spec.d));
  if (radius > spec.r_max && radius > 0.0) {
    double s = spec.r_max / radius;
    for (double& v : x.a) v *= s;
  }
  return Dataset::from_xy(std::move(x), std::move(y));
}

Dataset generate(const GenSpec& spec) {
  if (spec.n < 2) throw std::invalid_argument("gen: need n >= 2");
  if (spec.d < 1) throw std::invalid_argument("gen: need d >= 1");
  if (!(spec.r_max > 0.0)) throw std::invalid_argument("gen: r_max must be positive");
  switch (spec.kind) {
    case GenKind::PlantedMarginLinear:
      return generate_planted(spec);
    case GenKind::GaussianMixture:
      return generate_mixture(spec);
  }
  throw std::invalid_argument("gen: unknown kind");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);
  out << "y";
  for (int k = 1; k <= data.d(); ++k) out << ",x" << k;
  out << "\n";
  for (int i = 0; i < data.n(); ++i) {
    out << (data.y[i] > 0 ? "1" : "-1");
    const double* row = data.X.row(i);
    for (int k = 0; k < data.d(); ++k) out << ',' << format_double(row[k]);
    out << "\n";
  }
  if (!out) throw std::runtime_error("write_csv: write failed for " + path);
}

static double parse_field(const std::string& tok, int line, const std::string& path) {
  double v = 0.0;
  const char* b = tok.data();
  const char* e = tok.data() + tok.size();
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) {
    throw std::invalid_argument(path + ":" + std::to_string(line) +
                                ": malformed numeric field '" + tok + "'");
  }
  return v;
}

Dataset read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  int cols = 1;
  for (char c : line) cols += c == ',';
  int d = cols - 1;
  if (d < 1 || line.rfind("y,", 0) != 0) {
    throw std::invalid_argument(path + ":1: expected header 'y,x1,...,xd'");
  }

  std::vector<double> xs;
  Vec ys;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    int field = 0;
    while (std::getline(ss, tok, ',')) {
      double v = parse_field(tok, lineno, path);
      if (field == 0) {
        if (v != 1.0 && v != -1.0) {
          throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                      ": label must be -1 or 1, got '" + tok + "'");
        }
        ys.push_back(v);
      } else {
        xs.push_back(v);
      }
      ++field;
    }
    if (field != cols) {
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected " +
                                  std::to_string(cols) + " fields, got " +
                                  std::to_string(field));
    }
  }
  if (ys.empty()) throw std::invalid_argument(path + ": no samples (header-only file)");
  Mat x(static_cast<int>(ys.size()), d);
  x.a = std::move(xs);
  return Dataset::from_xy(std::move(x), std::move(ys));
}

}  // namespace ngd
