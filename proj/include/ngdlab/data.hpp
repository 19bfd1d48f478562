// Seeded synthetic dataset generators plus CSV ingestion/emission.
#pragma once

#include <string>

#include "ngdlab/numerics.hpp"
#include "ngdlab/objective.hpp"

namespace ngd {

enum class GenKind { PlantedMarginLinear, GaussianMixture };

struct GenSpec {
  GenKind kind = GenKind::PlantedMarginLinear;
  int n = 0;
  int d = 0;
  uint64_t seed = 0;
  double r_max = 1.0;

  // Planted kind: every emitted point satisfies y <x, w_star> >= gamma.
  double gamma = 0.1;
  Vec w_star;  // unit separator; empty draws one from the seed

  // Mixture kind: isotropic class covariances cov * I around the means
  // (class +1 first). Defaults follow a zero-mean mixture with
  // cov1 = 1, cov2 = 1/4.
  Vec mean_pos, mean_neg;  // empty means zero
  double cov_pos = 1.0;
  double cov_neg = 0.25;
};

// The separator the planted spec will use (explicit w_star, or the one the
// seed deterministically produces). Useful for fixing one distribution
// across resampled training sets.
Vec resolve_separator(const GenSpec& spec);

// Deterministic for a fixed spec. Generating n points and later generating
// n' > n points from the same spec yields the first n as a prefix.
Dataset generate(const GenSpec& spec);

// CSV format: header "y,x1,...,xd", one sample per row, label first,
// floats as shortest round-trip decimals.
Dataset read_csv(const std::string& path);
void write_csv(const Dataset& data, const std::string& path);

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);

}  // namespace ngd
