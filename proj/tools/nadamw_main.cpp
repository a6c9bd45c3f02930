#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nadamw/config.hpp"
#include "nadamw/harness.hpp"
#include "nadamw/io.hpp"
#include "nadamw/optim.hpp"
#include "nadamw/prescribe.hpp"
#include "nadamw/problems.hpp"
#include "nadamw/verification.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitConstraints = 2;
constexpr int kExitLemmas = 3;
constexpr int kExitDivergence = 4;

std::string path_join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::string short_float(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

nadamw::PrescriptionInputs make_inputs(const nadamw::Problem& problem,
                                       std::span<const double> x1, std::uint64_t K,
                                       double gamma) {
  const auto c = problem.constants();
  if (c.sigma_state_dependent)
    throw nadamw::ConfigError(
        "prescribe mode needs a fixed gradient-noise level; this problem's noise depends on "
        "the iterate");
  nadamw::PrescriptionInputs in;
  in.K = K;
  in.d = problem.dim();
  in.L = c.L;
  in.delta = problem.full_loss(x1) - c.f_star;
  in.sigma_s_sq = c.sigma_s_sq;
  in.gamma = gamma;
  in.validate();
  return in;
}

nadamw::HyperParams prescribed_hp(const nadamw::PrescribedParams& p,
                                  const nadamw::OptimizerSpec& opt) {
  nadamw::HyperParams hp = p.canonical_hp();
  hp.lambda = opt.lambda_override ? *opt.lambda_override : p.lambda_max * opt.lambda_scale;
  hp.validate();
  return hp;
}

struct PrescribedSetup {
  nadamw::PrescribedParams params;
  nadamw::BoundValues bound;
  nadamw::HyperParams hp;
  nadamw::ConstraintReport report;
  nadamw::PrescriptionInputs inputs;
};

PrescribedSetup make_prescribed_setup(const nadamw::ExperimentConfig& cfg,
                                      const nadamw::ProblemInstance& inst) {
  PrescribedSetup s;
  s.inputs = make_inputs(*inst.problem, inst.x1, cfg.run.K, cfg.optimizer.gamma);
  s.params = nadamw::prescribe(s.inputs, cfg.optimizer.variant);
  s.bound = nadamw::bound_rhs(s.inputs, cfg.optimizer.variant);
  s.hp = prescribed_hp(s.params, cfg.optimizer);
  s.report = nadamw::validate_prescription(s.params, s.hp, inst.x1, s.inputs);
  return s;
}

int cmd_params(const nadamw::ExperimentConfig& cfg, const std::optional<std::string>& out_dir) {
  if (!cfg.optimizer.prescribed)
    throw nadamw::ConfigError("params needs [optimizer] prescribe = theorem1|theorem2|corollary1|corollary2");
  const auto inst = nadamw::build_problem(cfg.problem);
  const auto s = make_prescribed_setup(cfg, inst);
  const std::string table = nadamw::io::prescription_table(s.params, s.bound, s.report);
  const std::string json = nadamw::io::prescription_json(s.params, s.bound, s.report);
  std::fputs(table.c_str(), stdout);
  std::fputs(json.c_str(), stdout);
  if (out_dir) {
    nadamw::io::write_text_file(path_join(*out_dir, "params.txt"), table);
    nadamw::io::write_text_file(path_join(*out_dir, "params.json"), json);
  }
  return s.report.overall_pass ? kExitOk : kExitConstraints;
}

int cmd_run(nadamw::ExperimentConfig cfg, const std::optional<std::uint64_t>& seed_override,
            const std::optional<std::string>& out_override) {
  if (cfg.sweep.present)
    throw nadamw::ConfigError("config has a [sweep] section; use the sweep subcommand");
  if (seed_override) cfg.run.seeds = {*seed_override};
  if (out_override) cfg.output.dir = *out_override;

  const auto inst = nadamw::build_problem(cfg.problem);
  nadamw::HyperParams hp;
  std::optional<nadamw::BoundContext> bound;
  if (cfg.optimizer.prescribed) {
    const auto s = make_prescribed_setup(cfg, inst);
    if (!s.report.overall_pass) {
      std::fputs(nadamw::io::prescription_table(s.params, s.bound, s.report).c_str(), stderr);
      std::fputs("constraint validation failed; not running\n", stderr);
      return kExitConstraints;
    }
    hp = s.hp;
    bound = nadamw::BoundContext{s.inputs, s.params};
  } else {
    hp = cfg.optimizer.hp;
  }
  if (cfg.run.lemma2_monitor && !nadamw::Lemma2Monitor::applicable(hp))
    throw nadamw::ConfigError(
        "[run]: lemma2_monitor needs theta <= tau <= 1 and theta <= beta <= sqrt(theta) with "
        "theta < 1");

  const std::string resolved = nadamw::resolved_config_text(cfg);
  const std::string hash = nadamw::io::hash_hex(nadamw::io::fnv1a(resolved));
  nadamw::io::write_text_file(path_join(cfg.output.dir, "resolved.config"), resolved);

  std::string jsonl;
  std::string lemma2_jsonl;
  bool any_diverged = false;
  for (const std::uint64_t seed : cfg.run.seeds) {
    nadamw::RunConfig rc;
    rc.problem = inst.problem.get();
    rc.x1 = inst.x1;
    rc.hp = hp;
    rc.K = cfg.run.K;
    rc.seed = seed;
    rc.log_every = cfg.run.log_every;
    rc.variant = cfg.optimizer.variant;
    rc.bound = bound;
    std::optional<nadamw::Lemma2Monitor> monitor;
    if (cfg.run.lemma2_monitor) {
      monitor.emplace(hp);
      rc.observer = &*monitor;
    }
    nadamw::Trajectory t = nadamw::run_experiment(rc);
    t.config_echo = resolved;
    any_diverged = any_diverged || t.summary.diverged;
    if (cfg.output.csv)
      nadamw::io::write_text_file(
          path_join(cfg.output.dir, "run_seed" + std::to_string(seed) + ".csv"),
          nadamw::io::trajectory_csv(t));
    if (cfg.output.jsonl) jsonl += nadamw::io::run_summary_jsonl_line(hash, t);
    if (monitor) lemma2_jsonl += nadamw::io::lemma_report_jsonl_line(monitor->report());

    std::printf("seed %llu: mean |grad|_1 = %s", static_cast<unsigned long long>(seed),
                short_float(t.summary.mean_grad_l1).c_str());
    if (t.summary.bound_rhs)
      std::printf(", bound rhs = %s (%s)", short_float(*t.summary.bound_rhs).c_str(),
                  t.summary.bound_satisfied.value_or(false) ? "satisfied" : "violated");
    if (t.summary.diverged)
      std::printf(", DIVERGED at step %llu",
                  static_cast<unsigned long long>(t.summary.steps_completed));
    std::printf("\n");
  }
  if (cfg.output.jsonl) nadamw::io::write_text_file(path_join(cfg.output.dir, "run.jsonl"), jsonl);
  if (cfg.run.lemma2_monitor)
    nadamw::io::write_text_file(path_join(cfg.output.dir, "lemma2.jsonl"), lemma2_jsonl);
  return any_diverged ? kExitDivergence : kExitOk;
}

int cmd_sweep(nadamw::ExperimentConfig cfg, const std::optional<std::string>& out_override,
              int jobs) {
  if (!cfg.sweep.present) throw nadamw::ConfigError("sweep needs a [sweep] section");
  if (out_override) cfg.output.dir = *out_override;
  if (cfg.run.lemma2_monitor)
    throw nadamw::ConfigError("[run]: lemma2_monitor is not supported in sweeps");

  nadamw::SweepSpec spec;
  spec.axis = cfg.sweep.axis;
  spec.values = cfg.sweep.values;
  spec.seeds = cfg.run.seeds;
  spec.base_K = cfg.run.K;
  spec.base_d = cfg.problem.d;
  spec.log_every = cfg.run.log_every;
  spec.variant = cfg.optimizer.variant;
  spec.jobs = std::max(jobs, 1);
  const nadamw::ProblemSpec pspec = cfg.problem;
  spec.factory = [pspec](std::uint64_t d) { return nadamw::build_problem_with_dim(pspec, d); };
  if (cfg.optimizer.prescribed) {
    if (cfg.optimizer.lambda_override)
      throw nadamw::ConfigError(
          "[optimizer]: a fixed lambda cannot be combined with a sweep; use lambda_scale or "
          "axis = lambda");
    spec.prescribe = nadamw::PrescriptionSource{cfg.optimizer.variant, cfg.optimizer.gamma,
                                                cfg.optimizer.lambda_scale};
  } else {
    spec.explicit_hp = cfg.optimizer.hp;
  }

  const nadamw::SweepResult res = nadamw::sweep(spec);

  const std::string resolved = nadamw::resolved_config_text(cfg);
  const std::string hash = nadamw::io::hash_hex(nadamw::io::fnv1a(resolved));
  nadamw::io::write_text_file(path_join(cfg.output.dir, "resolved.config"), resolved);
  if (cfg.output.jsonl)
    nadamw::io::write_text_file(path_join(cfg.output.dir, "sweep.jsonl"),
                                nadamw::io::sweep_jsonl(hash, res));
  if (cfg.output.csv) {
    nadamw::io::write_text_file(path_join(cfg.output.dir, "aggregates.csv"),
                                nadamw::io::sweep_aggregates_csv(res));
    for (const auto& run : res.runs) {
      const std::string name = std::string("sweep_") + nadamw::sweep_axis_name(res.axis) + "=" +
                               short_float(run.value) + "_seed" + std::to_string(run.seed) +
                               ".csv";
      nadamw::io::write_text_file(path_join(cfg.output.dir, name),
                                  nadamw::io::trajectory_csv(run.trajectory));
    }
  }

  std::size_t diverged_total = 0;
  for (const auto& agg : res.aggregates) {
    diverged_total += agg.diverged;
    std::printf("%s = %s: mean |grad|_1 = %s (stderr %s, runs %zu, diverged %zu)\n",
                nadamw::sweep_axis_name(res.axis), short_float(agg.value).c_str(),
                short_float(agg.mean_grad_l1_mean).c_str(),
                short_float(agg.mean_grad_l1_stderr).c_str(), agg.runs, agg.diverged);
  }
  if (res.axis == nadamw::SweepAxis::K) {
    std::vector<std::pair<std::uint64_t, double>> points;
    for (const auto& agg : res.aggregates)
      if (agg.runs > agg.diverged)
        points.emplace_back(static_cast<std::uint64_t>(agg.value), agg.mean_grad_l1_mean);
    if (points.size() >= 3) {
      const auto fit = nadamw::fit_rate_slope(points);
      std::printf("fitted slope of ln(mean |grad|_1) on ln(K): %s\n",
                  short_float(fit.slope).c_str());
    }
  }
  if (diverged_total > 0)
    std::printf("note: %zu run(s) diverged and were excluded from aggregates\n", diverged_total);
  return kExitOk;
}

// Running-average |grad| tracker on a geometric step grid, for log-log plots.
class RunningAverageTap final : public nadamw::StepObserver {
 public:
  explicit RunningAverageTap(const std::vector<std::uint64_t>& grid) : grid_(&grid) {}

  void on_step(std::uint64_t k, std::span<const double>, const nadamw::OptimizerState&,
               const nadamw::StepRecord&, std::span<const double>,
               std::span<const double> full_grad) override {
    for (const double gi : full_grad) sum_ += std::abs(gi);
    if (idx_ < grid_->size() && k == (*grid_)[idx_]) {
      points_.emplace_back(k, sum_ / static_cast<double>(k));
      idx_ += 1;
    }
  }

  const std::vector<std::pair<std::uint64_t, double>>& points() const { return points_; }

 private:
  const std::vector<std::uint64_t>* grid_;
  std::size_t idx_ = 0;
  double sum_ = 0.0;
  std::vector<std::pair<std::uint64_t, double>> points_;
};

std::vector<std::uint64_t> geometric_grid(std::uint64_t K) {
  std::vector<std::uint64_t> grid;
  for (std::uint64_t g = 1; g < K;) {
    grid.push_back(g);
    const auto next = static_cast<std::uint64_t>(std::llround(static_cast<double>(g) * 1.08));
    g = std::max(g + 1, next);
  }
  grid.push_back(K);
  return grid;
}

int cmd_toy(std::uint64_t K, std::uint64_t seed, const std::string& out,
            const std::vector<double>& lambdas) {
  if (K < 1) throw nadamw::ConfigError("--k must be >= 1");
  if (lambdas.empty()) throw nadamw::ConfigError("--lambda list must be nonempty");

  const double sqrt_k = std::sqrt(static_cast<double>(K));
  nadamw::HyperParams base;
  base.eta = 1.0 / sqrt_k;
  base.theta = 1.0 - 1.0 / sqrt_k;
  base.beta = std::sqrt(base.theta);
  base.tau = 1.0;
  base.eps = 1e-10;

  const nadamw::Toy1DParams tp;
  const auto problem = nadamw::make_toy1d(tp);
  const std::vector<double> x1{tp.x_star + 1.0};
  const std::uint64_t log_every = std::max<std::uint64_t>(1, K / 100);
  const auto grid = geometric_grid(K);

  std::vector<std::string> data_files;
  std::string jsonl;
  bool any_diverged = false;
  for (const double lam : lambdas) {
    nadamw::HyperParams hp = base;
    hp.lambda = lam;
    hp.validate();

    nadamw::ExperimentConfig tcfg;
    tcfg.problem.kind = "toy1d";
    tcfg.problem.d = 1;
    tcfg.problem.x_star = {tp.x_star};
    tcfg.problem.p = tp.p;
    tcfg.problem.x1 = x1;
    tcfg.optimizer.variant = nadamw::Variant::adamw;
    tcfg.optimizer.prescribed = false;
    tcfg.optimizer.hp = hp;
    tcfg.run.K = K;
    tcfg.run.seeds = {seed};
    tcfg.run.log_every = log_every;
    tcfg.output.dir = out;
    const std::string resolved = nadamw::resolved_config_text(tcfg);
    const std::string hash = nadamw::io::hash_hex(nadamw::io::fnv1a(resolved));
    const std::string tag = short_float(lam);
    nadamw::io::write_text_file(path_join(out, "toy_lambda_" + tag + ".config"), resolved);

    RunningAverageTap tap(grid);
    nadamw::RunConfig rc;
    rc.problem = problem.get();
    rc.x1 = x1;
    rc.hp = hp;
    rc.K = K;
    rc.seed = seed;
    rc.log_every = log_every;
    rc.variant = nadamw::Variant::adamw;
    rc.observer = &tap;
    nadamw::Trajectory t = nadamw::run_experiment(rc);
    t.config_echo = resolved;
    any_diverged = any_diverged || t.summary.diverged;

    nadamw::io::write_text_file(path_join(out, "toy_lambda_" + tag + ".csv"),
                                nadamw::io::trajectory_csv(t));
    const std::string plot_name = "toy_plot_lambda_" + tag + ".txt";
    nadamw::io::write_text_file(path_join(out, plot_name),
                                nadamw::io::two_column_plot_data(tap.points()));
    data_files.push_back(plot_name);
    jsonl += nadamw::io::run_summary_jsonl_line(hash, t);

    const double final_avg = tap.points().empty() ? 0.0 : tap.points().back().second;
    std::printf("lambda = %s: running-average |grad| at k=%llu is %s%s\n", tag.c_str(),
                static_cast<unsigned long long>(t.summary.steps_completed),
                short_float(final_avg).c_str(), t.summary.diverged ? " (DIVERGED)" : "");
  }
  nadamw::io::write_text_file(path_join(out, "toy.jsonl"), jsonl);
  nadamw::io::write_text_file(path_join(out, "plot_toy.py"),
                              nadamw::io::toy_plot_script(data_files, lambdas));
  return any_diverged ? kExitDivergence : kExitOk;
}

void print_lemma_line(const nadamw::LemmaReport& r) {
  std::printf("%s: %s (trials=%llu, violations=%llu, worst margin %s)\n", r.lemma.c_str(),
              r.pass ? "PASS" : "FAIL", static_cast<unsigned long long>(r.trials),
              static_cast<unsigned long long>(r.violations), short_float(r.worst_margin).c_str());
}

int cmd_verify_lemmas(std::uint64_t seed, const std::string& out) {
  const nadamw::LemmaSuiteResult suite = nadamw::run_default_lemma_suite(seed);
  std::string jsonl;
  jsonl += nadamw::io::lemma_report_jsonl_line(suite.lemma2);
  jsonl += nadamw::io::lemma_report_jsonl_line(suite.lemma3);
  jsonl += nadamw::io::lemma_report_jsonl_line(suite.lemma4);
  jsonl += nadamw::io::gaussian_report_jsonl_line(suite.gaussian);
  nadamw::io::write_text_file(path_join(out, "lemmas.jsonl"), jsonl);

  print_lemma_line(suite.lemma2);
  print_lemma_line(suite.lemma3);
  print_lemma_line(suite.lemma4);
  std::printf("gaussian_ratio: %s (d=%llu, ratio %s vs bound %s)\n",
              suite.gaussian.pass ? "PASS" : "FAIL",
              static_cast<unsigned long long>(suite.gaussian.d),
              short_float(suite.gaussian.ratio).c_str(),
              short_float(suite.gaussian.bound).c_str());
  return suite.all_pass ? kExitOk : kExitLemmas;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NAdamW family optimizer lab: prescriptions, runs, sweeps, lemma audits"};
  app.require_subcommand(1);

  auto* params_cmd = app.add_subcommand("params", "Print prescribed parameters and validate them");
  std::string params_config;
  params_cmd->add_option("--config", params_config, "experiment config file")->required();
  std::string params_out;
  auto* params_out_opt = params_cmd->add_option("--out", params_out, "also write params.{txt,json} here");

  auto* run_cmd = app.add_subcommand("run", "Run one experiment per seed");
  std::string run_config;
  run_cmd->add_option("--config", run_config, "experiment config file")->required();
  std::uint64_t run_seed = 0;
  auto* run_seed_opt = run_cmd->add_option("--seed", run_seed, "replace the config's seed list");
  std::string run_out;
  auto* run_out_opt = run_cmd->add_option("--out", run_out, "override the output directory");

  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one axis across seeds");
  std::string sweep_config;
  sweep_cmd->add_option("--config", sweep_config, "experiment config file")->required();
  std::string sweep_out;
  auto* sweep_out_opt = sweep_cmd->add_option("--out", sweep_out, "override the output directory");
  int sweep_jobs = 1;
  sweep_cmd->add_option("--jobs", sweep_jobs, "worker threads")->check(CLI::PositiveNumber);

  auto* toy_cmd = app.add_subcommand("toy", "Decoupled-decay failure demo on the 1d toy problem");
  std::uint64_t toy_k = 1000000;
  toy_cmd->add_option("--k", toy_k, "number of steps");
  std::uint64_t toy_seed = 0;
  toy_cmd->add_option("--seed", toy_seed, "rng seed");
  std::string toy_out = "out";
  toy_cmd->add_option("--out", toy_out, "output directory");
  std::vector<double> toy_lambdas{1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 0.0};
  toy_cmd->add_option("--lambda", toy_lambdas, "comma-separated decay values")->delimiter(',');

  auto* lemmas_cmd = app.add_subcommand("verify-lemmas", "Run the default lemma audit suite");
  std::uint64_t lemmas_seed = 0;
  lemmas_cmd->add_option("--seed", lemmas_seed, "rng seed");
  std::string lemmas_out = "out";
  lemmas_cmd->add_option("--out", lemmas_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (params_cmd->parsed()) {
      std::optional<std::string> out;
      if (*params_out_opt) out = params_out;
      return cmd_params(nadamw::parse_config_file(params_config), out);
    }
    if (run_cmd->parsed()) {
      std::optional<std::uint64_t> seed;
      if (*run_seed_opt) seed = run_seed;
      std::optional<std::string> out;
      if (*run_out_opt) out = run_out;
      return cmd_run(nadamw::parse_config_file(run_config), seed, out);
    }
    if (sweep_cmd->parsed()) {
      std::optional<std::string> out;
      if (*sweep_out_opt) out = sweep_out;
      return cmd_sweep(nadamw::parse_config_file(sweep_config), out, sweep_jobs);
    }
    if (toy_cmd->parsed()) return cmd_toy(toy_k, toy_seed, toy_out, toy_lambdas);
    if (lemmas_cmd->parsed()) return cmd_verify_lemmas(lemmas_seed, lemmas_out);
  } catch (const nadamw::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
