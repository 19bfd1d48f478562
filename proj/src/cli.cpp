#include "ngdlab/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "ngdlab/certify.hpp"
#include "ngdlab/data.hpp"
#include "ngdlab/stability.hpp"

namespace ngd {

namespace {

constexpr const char* kVersion = "ngdlab 1.0.0";

struct ModelFlags {
  int m = 50;
  std::string act = "smoothed";
  double alpha = 0.2;
  double ell = 1.0;
  double s = 4.0;
  std::string signs = "random";
  std::string loss = "exp";
  uint64_t sign_seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--m", m, "hidden width")->check(CLI::PositiveNumber);
    cmd->add_option("--act", act, "activation kind")
        ->check(CLI::IsMember({"smoothed", "leaky"}));
    cmd->add_option("--alpha", alpha, "activation lower slope");
    cmd->add_option("--ell", ell, "activation upper slope");
    cmd->add_option("--s", s, "smoothing sharpness");
    cmd->add_option("--signs", signs, "second-layer sign scheme")
        ->check(CLI::IsMember({"random", "balanced"}));
    cmd->add_option("--loss", loss, "loss kind")->check(CLI::IsMember({"exp", "logistic"}));
    cmd->add_option("--sign-seed", sign_seed, "seed for the second-layer signs");
  }

  Activation activation() const {
    if (act == "leaky") return Activation::leaky_relu(alpha, ell);
    return Activation::smoothed_leaky_relu(alpha, ell, s);
  }
  SignScheme sign_scheme() const {
    return signs == "balanced" ? SignScheme::Balanced : SignScheme::Random;
  }
  LossKind loss_kind() const {
    return loss == "logistic" ? LossKind::Logistic : LossKind::Exponential;
  }
  NetSpec net_spec() const { return NetSpec{m, activation(), sign_scheme(), sign_seed}; }
};

struct DataFlags {
  std::string data_path;
  std::string gen = "";
  int n = 100;
  int d = 20;
  double gamma = 0.1;
  uint64_t gen_seed = 7;
  double rmax = 1.0;
  double cov1 = 1.0;
  double cov2 = 0.25;

  void attach(CLI::App* cmd, bool gen_only = false) {
    if (!gen_only) cmd->add_option("--data", data_path, "dataset CSV path");
    cmd->add_option(gen_only ? "--kind" : "--gen", gen, "generator kind")
        ->check(CLI::IsMember({"planted", "mixture"}));
    cmd->add_option("--n", n, "sample count")->check(CLI::PositiveNumber);
    cmd->add_option("--d", d, "input dimension")->check(CLI::PositiveNumber);
    cmd->add_option("--gamma", gamma, "planted margin");
    cmd->add_option(gen_only ? "--seed" : "--gen-seed", gen_seed, "generator seed");
    cmd->add_option("--rmax", rmax, "data radius after rescaling");
    cmd->add_option("--cov1", cov1, "mixture covariance scale, class +1");
    cmd->add_option("--cov2", cov2, "mixture covariance scale, class -1");
  }

  GenSpec gen_spec() const {
    GenSpec spec;
    spec.kind = gen == "mixture" ? GenKind::GaussianMixture : GenKind::PlantedMarginLinear;
    spec.n = n;
    spec.d = d;
    spec.seed = gen_seed;
    spec.gamma = gamma;
    spec.r_max = rmax;
    spec.cov_pos = cov1;
    spec.cov_neg = cov2;
    return spec;
  }

  Dataset load() const {
    if (!data_path.empty()) return read_csv(data_path);
    if (gen.empty()) {
      throw std::invalid_argument("no dataset: pass --data FILE or --gen {planted,mixture}");
    }
    return generate(gen_spec());
  }
};

struct OptFlags {
  std::string kind = "ngd";
  std::string eta = "1";
  int T = 100;
  int batch = 1;
  double dt = 1e-3;
  uint64_t seed = 0;
  std::string init = "gauss";
  std::string eta_est = "full";
  int log_every = 1;

  void attach(CLI::App* cmd, bool with_kind) {
    if (with_kind) {
      cmd->add_option("--kind", kind, "optimizer kind")
          ->check(CLI::IsMember({"gd", "ngd", "sngd"}));
    }
    cmd->add_option("--eta", eta, "step-size constant, or 'auto' for the certified-safe value");
    cmd->add_option("--T", T, "iteration count / flow step count");
    cmd->add_option("--batch", batch, "sngd batch size");
    cmd->add_option("--dt", dt, "flow integrator step");
    cmd->add_option("--seed", seed, "run seed (init + batch sampling)");
    cmd->add_option("--init", init, "weight initialization")
        ->check(CLI::IsMember({"zero", "gauss"}));
    cmd->add_option("--eta-est", eta_est,
                    "sngd step-size loss estimate: full-batch F (paper) or a running EMA "
                    "of minibatch losses (non-paper)")
        ->check(CLI::IsMember({"full", "running"}));
    cmd->add_option("--log-every", log_every, "trace thinning")->check(CLI::PositiveNumber);
  }

  OptimizerConfig config(OptKind k) const {
    OptimizerConfig cfg;
    cfg.kind = k;
    cfg.T = T;
    cfg.batch = batch;
    cfg.dt = dt;
    cfg.seed = seed;
    cfg.init = init == "zero" ? InitKind::Zero : InitKind::GaussianRowNormalized;
    cfg.eta_est = eta_est == "running" ? EtaEst::Running : EtaEst::FullBatch;
    cfg.log_every = log_every;
    return cfg;
  }

  OptKind opt_kind() const {
    if (kind == "gd") return OptKind::Gd;
    if (kind == "sngd") return OptKind::Sngd;
    return OptKind::Ngd;
  }
};

// "auto" maps to the certified-safe step; explicit numbers are honored
// verbatim.
double resolve_eta(const std::string& text, const Objective& obj, double gamma,
                   OptimizerConfig& cfg) {
  if (text == "auto") {
    cfg.eta_policy = EtaPolicy::AutoSafe;
    cfg.eta = auto_safe_eta(obj, gamma);
    return cfg.eta;
  }
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("--eta: expected a number or 'auto', got '" + text + "'");
  }
  if (pos != text.size()) {
    throw std::invalid_argument("--eta: expected a number or 'auto', got '" + text + "'");
  }
  cfg.eta_policy = EtaPolicy::FixedEta;
  cfg.eta = v;
  return v;
}

void echo_config(const CLI::App& app, const std::string& out_path) {
  std::ofstream out(out_path + ".config", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write config echo next to " + out_path);
  out << app.config_to_str(true, false);
}

void log_line(const std::string& msg) { std::cerr << msg << "\n"; }

int do_train(const CLI::App& sub, const ModelFlags& model, const DataFlags& data,
             const OptFlags& opt, double cert_gamma, const std::string& test_path,
             const std::string& out, bool flow_mode) {
  Dataset train = data.load();
  Objective obj = model.net_spec().bind(model.loss_kind(), std::move(train));
  ObjectiveModel erm(obj);

  OptimizerConfig cfg = opt.config(flow_mode ? OptKind::Flow : opt.opt_kind());
  resolve_eta(opt.eta, obj, cert_gamma, cfg);
  cfg.keep_iterates = false;

  RunOptions ropts;
  std::optional<Dataset> test;
  if (!test_path.empty()) {
    test.emplace(read_csv(test_path));
    ropts.test_error = [&](const Mat& w) { return obj.error_on(w, *test); };
  }

  RunResult res = run(erm, cfg, ropts);
  write_trace_csv(res.trace, out);
  echo_config(sub, out);
  log_line(std::string("run status: ") + run_status_name(res.status) + ", steps " +
           std::to_string(res.steps_taken) + ", final F " +
           format_double(res.trace.back().loss) + ", wrote " + out);
  return res.status == RunStatus::Diverged ? 2 : 0;
}

int do_certify(const CLI::App& sub, const ModelFlags& model, const DataFlags& data,
               const OptFlags& opt, double gamma, const std::string& run_csv,
               const CertifyOptions& copts, const std::string& out) {
  Dataset train = data.load();
  Objective obj = model.net_spec().bind(model.loss_kind(), std::move(train));
  ObjectiveModel erm(obj);
  OptimizerConfig cfg = opt.config(OptKind::Ngd);
  resolve_eta(opt.eta, obj, gamma, cfg);
  cfg.keep_iterates = true;
  cfg.log_every = 1;
  RunResult res = run_ngd(erm, cfg);

  if (!run_csv.empty()) {
    std::vector<TraceRecord> loaded = read_trace_csv(run_csv);
    if (loaded.size() != res.trace.size()) {
      throw std::runtime_error("--run " + run_csv + ": trace length " +
                               std::to_string(loaded.size()) + " does not match the rerun (" +
                               std::to_string(res.trace.size()) + ")");
    }
    for (size_t i = 0; i < loaded.size(); ++i) {
      double a = loaded[i].loss, b = res.trace[i].loss;
      if (!(std::abs(a - b) <= 1e-12 * std::max({std::abs(a), std::abs(b), 1.0}))) {
        throw std::runtime_error("--run " + run_csv + ": F mismatch at t=" +
                                 std::to_string(loaded[i].t) + " (trace is not from this config)");
      }
    }
  }

  CertReport rep = run_certification(obj, res, gamma, copts);
  write_report(rep, out + ".report.txt");
  Rng rng(copts.seed, 0);
  std::vector<Mat> pts = sample_weight_points(copts.points_per_radius, copts.radii, obj.m(),
                                              obj.d(), rng);
  int n_random = static_cast<int>(pts.size());
  pts.insert(pts.end(), res.iterates.begin(), res.iterates.end());
  GradRatioStats grads = check_gradient_ratio(obj, pts);
  HessRatioStats hess = check_hessian_ratio(obj, pts, 1e-6, 1500, copts.seed + 1, copts.workers);
  write_ratio_csv(out + ".ratios.csv", grads, hess, n_random);
  echo_config(sub, out);
  log_line(std::string("certification ") + (rep.all_core_pass() ? "PASS" : "FAIL") +
           ", wrote " + out + ".report.txt");
  return 0;
}

void write_kv_report(const std::string& path,
                     const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

double parse_eta_number(const std::string& text) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("--eta: expected a number here, got '" + text + "'");
  }
  if (pos != text.size()) {
    throw std::invalid_argument("--eta: expected a number here, got '" + text + "'");
  }
  return v;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"normalized-gradient-descent lab for two-layer networks"};
  app.require_subcommand(1);

  auto add_config = [](CLI::App* cmd) {
    cmd->set_config("--config", "", "flat name=value config file; explicit flags win");
    cmd->allow_config_extras(false);
  };

  // datagen
  auto* datagen = app.add_subcommand("datagen", "generate a synthetic dataset CSV");
  add_config(datagen);
  DataFlags dg_data;
  dg_data.gen = "planted";
  std::string dg_out = "data.csv";
  dg_data.attach(datagen, /*gen_only=*/true);
  datagen->add_option("--out", dg_out, "output CSV path")->required();

  // train
  auto* train = app.add_subcommand("train", "run gd/ngd/sngd and emit a trace CSV");
  add_config(train);
  ModelFlags tr_model;
  DataFlags tr_data;
  OptFlags tr_opt;
  double tr_gamma = 0.1;
  std::string tr_test, tr_out = "trace.csv";
  tr_model.attach(train);
  tr_data.attach(train);
  tr_opt.attach(train, /*with_kind=*/true);
  train->add_option("--cert-gamma", tr_gamma, "planted margin used when --eta auto");
  train->add_option("--test-data", tr_test, "held-out CSV for the test_err column");
  train->add_option("--out", tr_out, "output trace CSV")->required();

  // flow
  auto* flow = app.add_subcommand("flow", "integrate normalized gradient flow");
  add_config(flow);
  ModelFlags fl_model;
  DataFlags fl_data;
  OptFlags fl_opt;
  double fl_gamma = 0.1;
  std::string fl_out = "flow.csv";
  fl_model.attach(flow);
  fl_data.attach(flow);
  fl_opt.attach(flow, /*with_kind=*/false);
  flow->add_option("--cert-gamma", fl_gamma, "planted margin used when --eta auto");
  flow->add_option("--out", fl_out, "output trace CSV")->required();

  // certify
  auto* certify = app.add_subcommand("certify", "rerun NGD and certify the landscape bounds");
  add_config(certify);
  ModelFlags ce_model;
  DataFlags ce_data;
  OptFlags ce_opt;
  ce_opt.eta = "auto";
  ce_opt.T = 500;
  double ce_gamma = 0.1;
  std::string ce_run, ce_out = "cert";
  CertifyOptions ce_opts;
  ce_model.attach(certify);
  ce_data.attach(certify);
  ce_opt.attach(certify, /*with_kind=*/false);
  certify->add_option("--cert-gamma", ce_gamma, "planted margin gamma for mu")->required();
  certify->add_option("--run", ce_run, "trace CSV to cross-check against the rerun");
  certify->add_option("--points-per-radius", ce_opts.points_per_radius,
                      "off-trajectory samples per radius");
  certify->add_option("--sgc-batch", ce_opts.sgc_batch, "strong-growth batch size");
  certify->add_option("--sgc-trials", ce_opts.sgc_trials, "strong-growth Monte-Carlo trials");
  certify->add_option("--cert-seed", ce_opts.seed, "sampling seed for the checks");
  certify->add_option("--workers", ce_opts.workers, "worker threads");
  certify->add_option("--out", ce_out, "output prefix")->required();

  // stability
  auto* stab = app.add_subcommand("stability", "non-expansiveness / gap / scaling experiments");
  add_config(stab);
  std::string st_task = "gap";
  ModelFlags st_model;
  DataFlags st_data;
  st_data.gen = "planted";
  OptFlags st_opt;
  std::string st_convex = "linear";
  int st_trials = 20, st_test_size = 2000, st_pairs = 2000, st_workers = 1, st_rf_width = 0;
  uint64_t st_seed = 0;
  std::string st_out = "stability";
  stab->add_option("--task", st_task, "experiment")
      ->check(CLI::IsMember({"nonexp", "gap", "scaling"}));
  st_model.attach(stab);
  st_data.attach(stab);
  st_opt.attach(stab, /*with_kind=*/false);
  stab->add_option("--model", st_convex, "convex model kind")
      ->check(CLI::IsMember({"linear", "rf"}));
  stab->add_option("--rf-width", st_rf_width, "random-features width");
  stab->add_option("--trials", st_trials, "trial count");
  stab->add_option("--test-size", st_test_size, "held-out sample size");
  stab->add_option("--pairs", st_pairs, "random pairs for nonexp");
  stab->add_option("--master-seed", st_seed, "master seed");
  stab->add_option("--workers", st_workers, "worker threads");
  stab->add_option("--out", st_out, "output prefix")->required();

  // loo
  auto* loo = app.add_subcommand("loo", "leave-one-out coupling along an NGD run");
  add_config(loo);
  ModelFlags lo_model;
  DataFlags lo_data;
  lo_data.gen = "planted";
  OptFlags lo_opt;
  std::string lo_convex = "rf";
  int lo_index = -1, lo_rf_width = 0, lo_workers = 1;
  std::string lo_out = "loo";
  lo_model.attach(loo);
  lo_data.attach(loo);
  lo_opt.attach(loo, /*with_kind=*/false);
  loo->add_option("--model", lo_convex, "convex model kind")
      ->check(CLI::IsMember({"linear", "rf"}));
  loo->add_option("--rf-width", lo_rf_width, "random-features width");
  loo->add_option("--i", lo_index, "held-out index (default: all)");
  loo->add_option("--workers", lo_workers, "worker threads");
  loo->add_option("--out", lo_out, "output prefix")->required();

  auto* version = app.add_subcommand("version", "print version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  auto convex_spec = [](const std::string& kind, const ModelFlags& mf, int rf_width,
                        uint64_t seed) {
    ConvexModelSpec spec;
    spec.loss = mf.loss_kind();
    if (kind == "rf") {
      spec.kind = ConvexKind::RandomFeatures;
      spec.rf_width = rf_width > 0 ? rf_width : mf.m;
      spec.rf_act = mf.activation();
      spec.rf_signs = mf.sign_scheme();
      spec.rf_seed = seed;
    }
    return spec;
  };

  try {
    if (version->parsed()) {
      std::cout << kVersion << "\n";
      return 0;
    }
    if (datagen->parsed()) {
      GenSpec spec = dg_data.gen_spec();
      Dataset data = generate(spec);
      write_csv(data, dg_out);
      if (spec.kind == GenKind::PlantedMarginLinear) {
        log_line("planted margin check: linear_margin = " +
                 format_double(linear_margin(data, resolve_separator(spec))));
      }
      log_line("wrote " + dg_out + " (n=" + std::to_string(data.n()) +
               ", d=" + std::to_string(data.d()) + ", R=" + format_double(data.radius) + ")");
      return 0;
    }
    if (train->parsed()) {
      return do_train(*train, tr_model, tr_data, tr_opt, tr_gamma, tr_test, tr_out, false);
    }
    if (flow->parsed()) {
      return do_train(*flow, fl_model, fl_data, fl_opt, fl_gamma, "", fl_out, true);
    }
    if (certify->parsed()) {
      return do_certify(*certify, ce_model, ce_data, ce_opt, ce_gamma, ce_run, ce_opts, ce_out);
    }
    if (stab->parsed()) {
      if (st_task == "nonexp") {
        Dataset data = st_data.load();
        ConvexObjective obj =
            convex_spec(st_convex, st_model, st_rf_width, st_seed).build(std::move(data));
        Rng rng(st_seed, 11);
        NonexpansiveResult res = check_nonexpansive(obj, st_pairs, rng);
        write_kv_report(st_out + ".report.txt",
                        {{"pairs", std::to_string(res.pairs)},
                         {"violations", std::to_string(res.violations)},
                         {"max_ratio", format_double(res.max_ratio)},
                         {"h", format_double(obj.self_bound_h())}});
        echo_config(*stab, st_out);
        log_line("nonexpansive: " + std::to_string(res.violations) + " violations in " +
                 std::to_string(res.pairs) + " pairs, wrote " + st_out + ".report.txt");
        return 0;
      }
      if (st_task == "gap") {
        GapConfig cfg;
        cfg.dist = st_data.gen_spec();
        cfg.model = convex_spec(st_convex, st_model, st_rf_width, st_seed);
        cfg.opt = st_opt.config(OptKind::Ngd);
        cfg.opt.eta = parse_eta_number(st_opt.eta);
        cfg.trials = st_trials;
        cfg.test_size = st_test_size;
        cfg.master_seed = st_seed;
        cfg.workers = st_workers;
        GapEstimate est = estimate_gap(cfg);
        write_gap_csv(est, st_out + ".trials.csv");
        write_kv_report(st_out + ".report.txt",
                        {{"trials", std::to_string(est.trials)},
                         {"n", std::to_string(est.n)},
                         {"T", std::to_string(est.T)},
                         {"mean_gap", format_double(est.mean_gap)},
                         {"bound_lipschitz", format_double(est.bound_lipschitz)},
                         {"bound_smooth", format_double(est.bound_smooth)},
                         {"mean_train_loss", format_double(est.mean_train_loss)},
                         {"mean_test_loss", format_double(est.mean_test_loss)},
                         {"mean_test_error", format_double(est.mean_test_error)},
                         {"weight_slope", format_double(est.weight_slope)},
                         {"weight_r2", format_double(est.weight_r2)},
                         {"margin_proxy", format_double(est.margin_proxy)},
                         {"G", format_double(est.G)}});
        echo_config(*stab, st_out);
        log_line("gap: mean " + format_double(est.mean_gap) + " vs bound " +
                 format_double(est.bound_lipschitz) + ", wrote " + st_out + ".report.txt");
        return 0;
      }
      // scaling
      OptimizerConfig base = st_opt.config(OptKind::Ngd);
      base.eta = parse_eta_number(st_opt.eta);
      ScalingResult res =
          test_error_scaling(st_data.gen_spec(), st_model.net_spec(), st_model.loss_kind(),
                             base, st_trials, st_test_size, st_seed, st_workers);
      write_kv_report(st_out + ".report.txt",
                      {{"mean_test_error", format_double(res.mean_test_error)},
                       {"c1", format_double(res.c1)},
                       {"c2", format_double(res.c2)},
                       {"weight_slope", format_double(res.weight_slope)},
                       {"weight_r2", format_double(res.weight_r2)},
                       {"margin_proxy", format_double(res.margin_proxy)}});
      echo_config(*stab, st_out);
      log_line("scaling: mean test error " + format_double(res.mean_test_error) + ", wrote " +
               st_out + ".report.txt");
      return 0;
    }
    if (loo->parsed()) {
      Dataset data = lo_data.load();
      ConvexObjective obj =
          convex_spec(lo_convex, lo_model, lo_rf_width, lo_opt.seed).build(std::move(data));
      OptimizerConfig cfg = lo_opt.config(OptKind::Ngd);
      cfg.eta = parse_eta_number(lo_opt.eta);
      cfg.keep_iterates = true;
      std::vector<LooRun> runs;
      double max_delta = 0.0;
      if (lo_index >= 0) {
        OptimizerConfig full_cfg = cfg;
        full_cfg.log_every = 1;
        RunResult full = run_ngd(obj, full_cfg);
        runs.push_back(run_loo(obj, full, lo_index));
        max_delta = runs.back().max_delta;
      } else {
        LooExperiment exp = run_all_loo(obj, cfg, lo_workers);
        runs = std::move(exp.runs);
        max_delta = exp.max_delta;
      }
      std::ofstream csv(lo_out + ".loo.csv", std::ios::binary);
      if (!csv) throw std::runtime_error("cannot open " + lo_out + ".loo.csv");
      csv << "i,t,eta_t,dist,delta_hat,cum_bound\n";
      for (const LooRun& r : runs) {
        for (size_t t = 0; t < r.dist.size(); ++t) {
          csv << r.held_out << ',' << t << ','
              << format_double(t < r.eta_steps.size() ? r.eta_steps[t] : 0.0) << ','
              << format_double(r.dist[t]) << ',' << format_double(r.delta_hat[t]) << ','
              << format_double(r.cum_bound[t]) << "\n";
        }
      }
      write_kv_report(lo_out + ".report.txt",
                      {{"max_delta", format_double(max_delta)},
                       {"h", format_double(obj.self_bound_h())},
                       {"runs", std::to_string(runs.size())}});
      echo_config(*loo, lo_out);
      log_line("loo: max delta " + format_double(max_delta) + ", wrote " + lo_out + ".loo.csv");
      return 0;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace ngd
