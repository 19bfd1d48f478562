#include <doctest.h>

#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ngdlab/cli.hpp"
#include "ngdlab/data.hpp"
#include "ngdlab/optim.hpp"

using namespace ngd;
namespace fs = std::filesystem;

namespace {

int run_cli(std::initializer_list<std::string> args) {
  std::vector<std::string> owned{"ngdlab"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& s : owned) argv.push_back(s.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("ngdlab_cli_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int counter() {
    static int c = 0;
    return c++;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Trace CSV with the wall_ns column blanked, for byte comparisons.
std::string strip_wall(const std::string& csv) {
  std::istringstream in(csv);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    size_t last = line.rfind(',');
    out << (last == std::string::npos ? line : line.substr(0, last)) << "\n";
  }
  return out.str();
}

}  // namespace

TEST_CASE("cli: version and help") {
  CHECK(run_cli({"version"}) == 0);
  CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("cli: datagen emits a margin-respecting CSV") {
  TempDir tmp;
  std::string out = tmp.file("data.csv");
  CHECK(run_cli({"datagen", "--kind", "planted", "--n", "100", "--d", "20", "--gamma", "0.1",
                 "--seed", "7", "--out", out}) == 0);
  Dataset data = read_csv(out);
  CHECK(data.n() == 100);
  CHECK(data.d() == 20);
  GenSpec spec;
  spec.kind = GenKind::PlantedMarginLinear;
  spec.n = 100;
  spec.d = 20;
  spec.gamma = 0.1;
  spec.seed = 7;
  CHECK(linear_margin(data, resolve_separator(spec)) >= 0.1);
}

TEST_CASE("cli: unknown flags and invalid values exit 1") {
  TempDir tmp;
  CHECK(run_cli({"datagen", "--bogus", "1", "--out", tmp.file("x.csv")}) == 1);
  CHECK(run_cli({"datagen", "--kind", "martian", "--out", tmp.file("x.csv")}) == 1);
  CHECK(run_cli({"train", "--eta", "fast", "--gen", "planted", "--out", tmp.file("t.csv")}) == 1);
  CHECK(run_cli({"nosuchcommand"}) == 1);
}

TEST_CASE("cli: malformed dataset files exit 1") {
  TempDir tmp;
  std::string bad = tmp.file("bad.csv");
  {
    std::ofstream out(bad);
    out << "y,x1\n0,0.5\n";
  }
  CHECK(run_cli({"train", "--data", bad, "--out", tmp.file("t.csv")}) == 1);
}

TEST_CASE("cli: train ngd with auto eta produces a strictly decreasing trace") {
  TempDir tmp;
  std::string data = tmp.file("data.csv");
  REQUIRE(run_cli({"datagen", "--kind", "planted", "--n", "40", "--d", "8", "--gamma", "0.15",
                   "--seed", "3", "--out", data}) == 0);
  std::string trace = tmp.file("trace.csv");
  CHECK(run_cli({"train", "--kind", "ngd", "--eta", "auto", "--cert-gamma", "0.15", "--T", "60",
                 "--data", data, "--m", "20", "--act", "smoothed", "--alpha", "0.2", "--ell",
                 "1", "--s", "4", "--seed", "5", "--out", trace}) == 0);
  auto rows = read_trace_csv(trace);
  REQUIRE(rows.size() == 61);
  for (size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].loss < rows[i - 1].loss);
  CHECK(fs::exists(trace + ".config"));
}

TEST_CASE("cli: diverged training exits 2 but still writes the trace") {
  TempDir tmp;
  std::string data = tmp.file("data.csv");
  {
    // contradictory labels blow up under a huge fixed step
    std::ofstream out(data);
    out << "y,x1\n1,1\n-1,1\n";
  }
  std::string trace = tmp.file("trace.csv");
  CHECK(run_cli({"train", "--kind", "gd", "--eta", "50", "--T", "100", "--data", data, "--m",
                 "1", "--act", "smoothed", "--alpha", "1", "--ell", "1", "--s", "1", "--init",
                 "zero", "--out", trace}) == 2);
  CHECK(fs::exists(trace));
}

TEST_CASE("cli: flow runs and certify writes a passing report") {
  TempDir tmp;
  std::string data = tmp.file("data.csv");
  REQUIRE(run_cli({"datagen", "--kind", "planted", "--n", "30", "--d", "6", "--gamma", "0.2",
                   "--seed", "9", "--out", data}) == 0);
  std::string fl = tmp.file("flow.csv");
  CHECK(run_cli({"flow", "--data", data, "--m", "10", "--dt", "0.01", "--T", "50", "--seed",
                 "2", "--out", fl}) == 0);
  auto rows = read_trace_csv(fl);
  CHECK(rows.size() == 51);
  CHECK(rows.back().loss < rows.front().loss);

  std::string cert = tmp.file("cert");
  CHECK(run_cli({"certify", "--data", data, "--cert-gamma", "0.2", "--m", "10", "--eta", "auto",
                 "--T", "30", "--seed", "2", "--points-per-radius", "5", "--sgc-trials", "50",
                 "--out", cert}) == 0);
  std::string report = slurp(cert + ".report.txt");
  CHECK(report.find("pass_grad_upper=true") != std::string::npos);
  CHECK(report.find("pass_grad_lower=true") != std::string::npos);
  CHECK(report.find("pass_hess_impl=true") != std::string::npos);
  CHECK(report.find("pass_path=true") != std::string::npos);
  CHECK(report.find("pass_rate=true") != std::string::npos);
  CHECK(report.find("pass_sgc=true") != std::string::npos);
  CHECK(fs::exists(cert + ".ratios.csv"));
}

TEST_CASE("cli: identical invocations give byte-identical outputs modulo wall_ns") {
  TempDir tmp;
  std::string data = tmp.file("data.csv");
  REQUIRE(run_cli({"datagen", "--kind", "mixture", "--n", "24", "--d", "4", "--seed", "11",
                   "--out", data}) == 0);
  std::string t1 = tmp.file("t1.csv");
  auto invoke = [&] {
    return run_cli({"train", "--kind", "sngd", "--batch", "6", "--eta", "0.5", "--T", "40",
                    "--data", data, "--m", "12", "--seed", "13", "--out", t1});
  };
  REQUIRE(invoke() == 0);
  std::string trace_a = slurp(t1), config_a = slurp(t1 + ".config");
  REQUIRE(invoke() == 0);
  CHECK(strip_wall(slurp(t1)) == strip_wall(trace_a));
  CHECK(slurp(t1 + ".config") == config_a);
}

TEST_CASE("cli: config files feed flags, and explicit flags win") {
  TempDir tmp;
  std::string cfg = tmp.file("gen.cfg");
  {
    std::ofstream out(cfg);
    out << "kind=planted\nn=30\nd=5\ngamma=0.2\nseed=4\n";
  }
  std::string a = tmp.file("a.csv");
  CHECK(run_cli({"datagen", "--config", cfg, "--out", a}) == 0);
  CHECK(read_csv(a).n() == 30);
  std::string b = tmp.file("b.csv");
  CHECK(run_cli({"datagen", "--config", cfg, "--n", "12", "--out", b}) == 0);
  CHECK(read_csv(b).n() == 12);  // flag beats config

  std::string bad = tmp.file("bad.cfg");
  {
    std::ofstream out(bad);
    out << "kind=planted\nunknown_key=1\n";
  }
  CHECK(run_cli({"datagen", "--config", bad, "--out", tmp.file("c.csv")}) == 1);
}

TEST_CASE("cli: stability tasks write their reports") {
  TempDir tmp;
  std::string prefix = tmp.file("nonexp");
  CHECK(run_cli({"stability", "--task", "nonexp", "--gen", "planted", "--n", "30", "--d", "6",
                 "--gamma", "0.15", "--gen-seed", "2", "--model", "linear", "--loss",
                 "logistic", "--pairs", "100", "--out", prefix}) == 0);
  std::string rep = slurp(prefix + ".report.txt");
  CHECK(rep.find("violations=0") != std::string::npos);

  std::string gap = tmp.file("gap");
  CHECK(run_cli({"stability", "--task", "gap", "--gen", "planted", "--n", "30", "--d", "5",
                 "--gamma", "0.2", "--model", "linear", "--loss", "logistic", "--eta", "0.5",
                 "--T", "20", "--trials", "3", "--test-size", "100", "--master-seed", "6",
                 "--out", gap}) == 0);
  CHECK(fs::exists(gap + ".trials.csv"));
  CHECK(slurp(gap + ".report.txt").find("mean_gap=") != std::string::npos);
}

TEST_CASE("cli: loo reports the delta envelope") {
  TempDir tmp;
  std::string prefix = tmp.file("loo");
  CHECK(run_cli({"loo", "--gen", "planted", "--n", "10", "--d", "4", "--gamma", "0.2",
                 "--gen-seed", "3", "--model", "rf", "--rf-width", "49", "--act", "smoothed",
                 "--alpha", "0", "--ell", "1", "--s", "1", "--loss", "exp", "--eta", "0.5",
                 "--T", "7", "--init", "zero", "--out", prefix}) == 0);
  std::string rep = slurp(prefix + ".report.txt");
  CHECK(rep.find("max_delta=") != std::string::npos);
  CHECK(fs::exists(prefix + ".loo.csv"));
}
