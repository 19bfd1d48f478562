// Dense vector/matrix plumbing, seeded randomness, power iteration and
// finite-difference probes shared by every other module.
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ngd {

using Vec = std::vector<double>;

// Row-major dense matrix. Weight matrices are m x d with row j holding the
// incoming weights of neuron j, so mat.a doubles as the concatenated vector
// [w_1; ...; w_m].
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }
  const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }
  double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
  size_t size() const { return a.size(); }
};

double dot(const double* x, const double* y, int n);
double dot(const Vec& x, const Vec& y);
double norm2(const Vec& x);
double norm2(const double* x, int n);
double frobenius_norm(const Mat& w);
// y += c * x
void axpy(double c, const double* x, double* y, int n);
void axpy(double c, const Vec& x, Vec& y);
void scale(Vec& x, double c);

// Throws std::runtime_error naming `what` if any entry is NaN/Inf.
void require_finite(const Vec& x, const std::string& what);
void require_finite(const Mat& w, const std::string& what);

// Neumaier compensated summation.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v);
  double value() const { return sum + comp; }
};

// Deterministic pseudo-random stream. Identical (seed, stream) pairs yield
// bitwise-identical draw sequences; independent work uses distinct streams.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0);

  uint64_t seed() const { return seed_; }
  uint64_t stream_id() const { return stream_; }

  uint64_t next_u64();
  double uniform01();  // [0, 1)
  double normal();     // standard normal (Marsaglia polar)
  int uniform_int(int n);  // uniform on [0, n), rejection sampled
  // Derived generator with the same seed and a different stream id.
  Rng stream(uint64_t stream_id) const { return Rng(seed_, stream_id); }

  Vec normal_vec(int n);
  // k distinct indices from [0, n), ascending.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  uint64_t seed_ = 0;
  uint64_t stream_ = 0;
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

struct PowerIterResult {
  double value = 0.0;  // estimate of the operator norm (max |eigenvalue|)
  int iters = 0;
  bool converged = false;
};

// Power iteration with Rayleigh-quotient estimates and a relative-change
// stopping rule. `apply` must be a symmetric linear map on R^dim.
// Non-convergence is reported in the result, not thrown.
PowerIterResult power_iteration(const std::function<void(const Vec&, Vec&)>& apply,
                                int dim, double tol, int max_iter, Rng& rng);

// Central-difference gradient, (f(w + h e_i) - f(w - h e_i)) / (2h).
// Throws naming the coordinate if a component comes out non-finite.
Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& w,
                double step = 1e-5);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LinearFit fit_linear(std::span<const double> x, std::span<const double> y);

// Runs fn(0..n-1) on up to `workers` threads. Tasks must write to disjoint
// slots; results are then independent of the schedule.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);
int hardware_workers();

uint64_t fnv1a_init();
void fnv1a_add(uint64_t& h, const void* data, size_t len);

}  // namespace ngd
