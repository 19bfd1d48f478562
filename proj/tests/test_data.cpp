#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ngdlab/data.hpp"

using namespace ngd;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("planted generator meets its margin and radius targets") {
  GenSpec spec;
  spec.kind = GenKind::PlantedMarginLinear;
  spec.n = 100;
  spec.d = 20;
  spec.gamma = 0.1;
  spec.seed = 7;
  Dataset data = generate(spec);
  CHECK(data.n() == 100);
  CHECK(data.d() == 20);
  CHECK(data.radius <= 1.0 + 1e-15);
  CHECK(linear_margin(data, resolve_separator(spec)) >= 0.1);
  bool has_pos = false, has_neg = false;
  for (double y : data.y) (y > 0 ? has_pos : has_neg) = true;
  CHECK(has_pos);
  CHECK(has_neg);
}

TEST_CASE("planted generator emits margin-feasible sets across many seeds") {
  for (uint64_t seed = 0; seed < 25; ++seed) {
    GenSpec spec;
    spec.kind = GenKind::PlantedMarginLinear;
    spec.n = 30;
    spec.d = 4;
    spec.gamma = 0.35;
    spec.seed = seed;
    Dataset data = generate(spec);
    CHECK(linear_margin(data, resolve_separator(spec)) >= 0.35);
    CHECK(data.radius <= 1.0 + 1e-15);
  }
}

TEST_CASE("infeasible planted margin errors out") {
  GenSpec spec;
  spec.kind = GenKind::PlantedMarginLinear;
  spec.n = 10;
  spec.d = 3;
  spec.gamma = 1.0;  // equals r_max
  CHECK_THROWS_AS(generate(spec), std::invalid_argument);
  spec.n = 1;
  spec.gamma = 0.1;
  CHECK_THROWS_AS(generate(spec), std::invalid_argument);
}

TEST_CASE("prefix stability: a longer draw extends a shorter one") {
  GenSpec small, big;
  small.kind = big.kind = GenKind::PlantedMarginLinear;
  small.d = big.d = 5;
  small.gamma = big.gamma = 0.15;
  small.seed = big.seed = 99;
  small.n = 20;
  big.n = 60;
  Dataset a = generate(small), b = generate(big);
  for (int i = 0; i < small.n; ++i) {
    CHECK(a.y[i] == b.y[i]);
    for (int k = 0; k < small.d; ++k) CHECK(a.X(i, k) == b.X(i, k));
  }
}

TEST_CASE("mixture generator: class covariance scales show up in the data") {
  GenSpec spec;
  spec.kind = GenKind::GaussianMixture;
  spec.n = 4000;
  spec.d = 5;
  spec.seed = 11;
  spec.cov_pos = 1.0;
  spec.cov_neg = 0.25;
  spec.r_max = 1.0;
  Dataset data = generate(spec);
  CHECK(data.radius <= 1.0 + 1e-15);
  // per-class sample covariance traces; the global rescale cancels in the ratio
  double tr_pos = 0.0, tr_neg = 0.0;
  int n_pos = 0, n_neg = 0;
  Vec mean_pos(5, 0.0), mean_neg(5, 0.0);
  for (int i = 0; i < data.n(); ++i) {
    Vec& m = data.y[i] > 0 ? mean_pos : mean_neg;
    (data.y[i] > 0 ? n_pos : n_neg)++;
    for (int k = 0; k < 5; ++k) m[k] += data.X(i, k);
  }
  for (int k = 0; k < 5; ++k) {
    mean_pos[k] /= n_pos;
    mean_neg[k] /= n_neg;
  }
  for (int i = 0; i < data.n(); ++i) {
    const Vec& m = data.y[i] > 0 ? mean_pos : mean_neg;
    double& tr = data.y[i] > 0 ? tr_pos : tr_neg;
    for (int k = 0; k < 5; ++k) {
      double c = data.X(i, k) - m[k];
      tr += c * c;
    }
  }
  tr_pos /= n_pos;
  tr_neg /= n_neg;
  double ratio = tr_pos / tr_neg;
  CHECK(ratio >= 4.0 / 1.3);
  CHECK(ratio <= 4.0 * 1.3);
  CHECK(n_pos == 2000);
  CHECK(n_neg == 2000);
}

TEST_CASE("odd mixture sizes give the extra point to class +1") {
  GenSpec spec;
  spec.kind = GenKind::GaussianMixture;
  spec.n = 7;
  spec.d = 2;
  spec.seed = 1;
  Dataset data = generate(spec);
  int pos = 0;
  for (double y : data.y) pos += y > 0;
  CHECK(pos == 4);
}

TEST_CASE("identical specs produce identical CSV bytes") {
  GenSpec spec;
  spec.kind = GenKind::PlantedMarginLinear;
  spec.n = 40;
  spec.d = 6;
  spec.gamma = 0.2;
  spec.seed = 5;
  std::string p1 = temp_path("ngdlab_gen_a.csv"), p2 = temp_path("ngdlab_gen_b.csv");
  write_csv(generate(spec), p1);
  write_csv(generate(spec), p2);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("csv round trip is lossless") {
  Mat x(3, 2);
  x(0, 0) = 0.1;
  x(0, 1) = -1.0 / 3.0;
  x(1, 0) = 1e-300;
  x(1, 1) = 12345.678901234567;
  x(2, 0) = -0.0;
  x(2, 1) = 2.2250738585072014e-308;
  Dataset data = Dataset::from_xy(x, {1.0, -1.0, 1.0});
  std::string path = temp_path("ngdlab_roundtrip.csv");
  write_csv(data, path);
  Dataset back = read_csv(path);
  REQUIRE(back.n() == 3);
  REQUIRE(back.d() == 2);
  for (int i = 0; i < 3; ++i) {
    CHECK(back.y[i] == data.y[i]);
    for (int k = 0; k < 2; ++k) CHECK(back.X(i, k) == data.X(i, k));
  }
  CHECK(back.radius == data.radius);
  std::remove(path.c_str());
}

TEST_CASE("csv validation errors carry line numbers") {
  std::string path = temp_path("ngdlab_bad.csv");
  {
    std::ofstream out(path);
    out << "y,x1,x2\n1,0.5,0.25\n0,0.1,0.2\n";
  }
  CHECK_THROWS_WITH_AS(read_csv(path), doctest::Contains(":3: label must be -1 or 1"),
                       std::invalid_argument);
  {
    std::ofstream out(path);
    out << "y,x1,x2\n1,0.5\n";
  }
  CHECK_THROWS_WITH_AS(read_csv(path), doctest::Contains(":2: expected 3 fields"),
                       std::invalid_argument);
  {
    std::ofstream out(path);
    out << "y,x1,x2\n";
  }
  CHECK_THROWS_WITH_AS(read_csv(path), doctest::Contains("no samples"), std::invalid_argument);
  {
    std::ofstream out(path);
    out << "y,x1,x2\n1,0.5,zebra\n";
  }
  CHECK_THROWS_WITH_AS(read_csv(path), doctest::Contains("malformed numeric field"),
                       std::invalid_argument);
  std::remove(path.c_str());
}

TEST_CASE("explicit separators are honored after normalization") {
  GenSpec spec;
  spec.kind = GenKind::PlantedMarginLinear;
  spec.n = 25;
  spec.d = 3;
  spec.gamma = 0.2;
  spec.seed = 2;
  spec.w_star = {2.0, 0.0, 0.0};  // normalized to e_1
  Dataset data = generate(spec);
  Vec sep = resolve_separator(spec);
  CHECK(sep[0] == doctest::Approx(1.0));
  CHECK(linear_margin(data, sep) >= 0.2);
}
