// Desk-scale acceptance gate. Each criterion prints exactly one PASS/FAIL
// line; the exit status is the number of failed criteria.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nadamw/config.hpp"
#include "nadamw/harness.hpp"
#include "nadamw/io.hpp"
#include "nadamw/optim.hpp"
#include "nadamw/prescribe.hpp"
#include "nadamw/problems.hpp"
#include "nadamw/rng.hpp"
#include "nadamw/verification.hpp"

#ifndef NADAMW_CLI_PATH
#error "NADAMW_CLI_PATH must point at the command-line binary"
#endif

namespace {

using namespace nadamw;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

ProblemInstance unit_quadratic(std::uint64_t d, double sigma, double x1_coord) {
  NoisyQuadraticParams p;
  p.curvatures.assign(d, 1.0);
  p.x_star.assign(d, 0.0);
  p.sigma.assign(d, sigma);
  ProblemInstance inst;
  inst.problem = make_noisy_quadratic(std::move(p));
  inst.x1.assign(d, x1_coord);
  return inst;
}

BoundContext prescribed_context(const Problem& prob, const std::vector<double>& x1,
                                std::uint64_t K, Variant variant) {
  const auto c = prob.constants();
  PrescriptionInputs in;
  in.K = K;
  in.d = prob.dim();
  in.L = c.L;
  in.delta = prob.full_loss(x1) - c.f_star;
  in.sigma_s_sq = c.sigma_s_sq;
  in.gamma = 1.0;
  return BoundContext{in, prescribe(in, variant)};
}

// 1: the m_tilde^2/v <= 8 ratio under randomized admissible moments and
// adversarial gradient streams, at full load, within the runtime budget.
Outcome criterion_ratio_stress() {
  const auto t0 = std::chrono::steady_clock::now();
  Lemma2StressSpec spec;
  spec.seed = 20260819;
  const auto r = run_lemma2_stress(spec);
  const double secs = seconds_since(t0);
  const bool pass = r.pass && r.violations == 0 &&
                    r.trials >= spec.triples * spec.steps_per_triple && secs < 60.0;
  return {pass, fmt("%llu ratio checks, %llu violations, worst margin %.3g, budget 60s",
                    (unsigned long long)r.trials, (unsigned long long)r.violations,
                    r.worst_margin)};
}

struct GridOutcome {
  Outcome envelope;
  Outcome bound;
};

// 2 and 3 share the prescribed NoisyQuadratic grid: d in {10,100},
// K in {1e3,1e4}, 10 seeds. 2 checks the decay envelope on every iterate,
// 3 checks the guaranteed mean-l1 bound on every run.
GridOutcome criteria_envelope_and_bound() {
  const auto t0 = std::chrono::steady_clock::now();
  std::uint64_t runs = 0;
  std::uint64_t row_count = 0;
  double worst_env_frac = 0.0;
  double worst_bound_frac = 0.0;
  bool envelope_ok = true;
  bool bound_ok = true;
  for (const std::uint64_t d : {10, 100}) {
    for (const std::uint64_t K : {1000, 10000}) {
      const auto inst = unit_quadratic(d, 1.0, 1.0);
      const auto ctx = prescribed_context(*inst.problem, inst.x1, K, Variant::adamw);
      const HyperParams hp = ctx.params.canonical_hp();
      const auto report = validate_prescription(ctx.params, hp, inst.x1, ctx.inputs);
      if (!report.overall_pass)
        return {{false, "prescription constraints failed"}, {false, "prescription constraints failed"}};
      const double envelope = std::sqrt(ctx.params.nu) / std::pow((double)K, 0.25);
      if (!(envelope < 1.0)) envelope_ok = false;
      for (std::uint64_t seed = 0; seed < 10; ++seed) {
        RunConfig cfg;
        cfg.problem = inst.problem.get();
        cfg.x1 = inst.x1;
        cfg.hp = hp;
        cfg.K = K;
        cfg.seed = seed;
        cfg.log_every = std::max<std::uint64_t>(1, K / 100);
        cfg.bound = ctx;
        const auto t = run_experiment(cfg);
        runs += 1;
        if (t.summary.diverged || t.summary.steps_completed != K) {
          envelope_ok = false;
          bound_ok = false;
          continue;
        }
        worst_env_frac = std::max(worst_env_frac, t.summary.max_lambda_x_inf / envelope);
        if (t.summary.max_lambda_x_inf > envelope) envelope_ok = false;
        for (const auto& row : t.rows) {
          row_count += 1;
          if (row.lambda_x_inf > envelope) envelope_ok = false;
        }
        if (!t.summary.bound_rhs || t.summary.mean_grad_l1 > *t.summary.bound_rhs)
          bound_ok = false;
        else
          worst_bound_frac = std::max(worst_bound_frac, t.summary.mean_grad_l1 / *t.summary.bound_rhs);
      }
    }
  }
  const double secs = seconds_since(t0);
  bound_ok = bound_ok && secs < 300.0;
  GridOutcome out;
  out.envelope = {envelope_ok,
                  fmt("%llu runs, %llu logged rows, worst decay-radius fraction %.3g",
                      (unsigned long long)runs, (unsigned long long)row_count, worst_env_frac)};
  out.bound = {bound_ok, fmt("%llu runs, worst mean|grad|_1 / rhs = %.3g, budget 300s",
                             (unsigned long long)runs, worst_bound_frac)};
  return out;
}

// 4: fitted K-sweep exponent near the guaranteed -1/4.
Outcome criterion_rate_exponent() {
  const auto t0 = std::chrono::steady_clock::now();
  SweepSpec spec;
  spec.axis = SweepAxis::K;
  spec.values = {1000.0, 4000.0, 16000.0, 64000.0};
  for (std::uint64_t s = 0; s < 10; ++s) spec.seeds.push_back(s);
  spec.factory = [](std::uint64_t d) { return unit_quadratic(d, 1.0, 1.0); };
  spec.base_K = 1000;
  spec.base_d = 50;
  spec.log_every = 1000;
  spec.prescribe = PrescriptionSource{Variant::adamw, 1.0, 1.0};
  spec.jobs = 4;
  const auto res = sweep(spec);
  std::vector<std::pair<std::uint64_t, double>> points;
  for (const auto& agg : res.aggregates) {
    if (agg.runs != 10 || agg.diverged != 0) return {false, "sweep had diverged or missing runs"};
    points.emplace_back((std::uint64_t)std::llround(agg.value), agg.mean_grad_l1_mean);
  }
  const auto fit = fit_rate_slope(points);
  const double secs = seconds_since(t0);
  const bool pass = fit.slope >= -0.45 && fit.slope <= -0.15 && secs < 600.0;
  return {pass, fmt("fitted slope %.3f, window [-0.45, -0.15], budget 600s", fit.slope)};
}

// 5: sqrt(d) scaling of the l1 gradient norm across d in {16,64,256}.
Outcome criterion_dimension_scaling() {
  SweepSpec spec;
  spec.axis = SweepAxis::d;
  spec.values = {16.0, 64.0, 256.0};
  for (std::uint64_t s = 0; s < 10; ++s) spec.seeds.push_back(s);
  spec.factory = [](std::uint64_t d) { return unit_quadratic(d, 1e-3, 4.0 / std::sqrt((double)d)); };
  spec.base_K = 4000;
  spec.base_d = 16;
  spec.log_every = 40;
  spec.prescribe = PrescriptionSource{Variant::adamw, 1.0, 1.0};
  spec.jobs = 4;
  const auto res = sweep(spec);
  for (const auto& agg : res.aggregates)
    if (agg.runs != 10 || agg.diverged != 0) return {false, "sweep had diverged or missing runs"};
  const double r1 = res.aggregates[1].mean_grad_l1_mean / res.aggregates[0].mean_grad_l1_mean;
  const double r2 = res.aggregates[2].mean_grad_l1_mean / res.aggregates[1].mean_grad_l1_mean;
  bool ratios_ok = r1 >= 1.5 && r1 <= 2.5 && r2 >= 1.5 && r2 <= 2.5;

  double lo = 1.0, hi = 0.0;
  std::uint64_t rows = 0;
  bool rows_ok = true;
  for (const auto& run : res.runs) {
    const double sqd = std::sqrt(run.value);
    for (const auto& row : run.trajectory.rows) {
      if (!row.ratio) continue;
      rows += 1;
      const double frac = *row.ratio / sqd;
      lo = std::min(lo, frac);
      hi = std::max(hi, frac);
      if (frac < 0.5 || frac > 1.0 + 1e-12) rows_ok = false;
    }
  }
  return {ratios_ok && rows_ok,
          fmt("consecutive-d ratios %.3f, %.3f (window [1.5, 2.5]); "
              "|grad|_1/|grad|_2/sqrt(d) in [%.3f, %.3f] over %llu rows (window [0.5, 1.0])",
              r1, r2, lo, hi, (unsigned long long)rows)};
}

// 6: Monte-Carlo gaussian norm ratio against the closed-form oracle.
Outcome criterion_gaussian_ratio() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = mc_gaussian_ratio(100, 100000, 20260819);
  const double secs = seconds_since(t0);
  const bool near_oracle = std::fabs(r.ratio - r.oracle_ratio) <= 0.01 * r.oracle_ratio;
  const bool l1_ok = std::fabs(r.mean_l1 - r.oracle_mean_l1) <= 3.0 * r.mean_l1_stderr;
  const bool pass = r.pass && near_oracle && l1_ok && secs < 10.0;
  return {pass, fmt("ratio %.4f vs bound %.4f and oracle %.4f; mean l1 off by %.2f se; budget 10s",
                    r.ratio, r.bound, r.oracle_ratio,
                    std::fabs(r.mean_l1 - r.oracle_mean_l1) / r.mean_l1_stderr)};
}

class RunningAverageProbe final : public StepObserver {
 public:
  void on_step(std::uint64_t k, std::span<const double>, const OptimizerState&,
               const StepRecord&, std::span<const double>,
               std::span<const double> full_grad) override {
    double l1 = 0.0;
    for (const double gi : full_grad) l1 += std::fabs(gi);
    sum_ += l1;
    if (k % 1000 == 0) samples_.emplace_back(k, sum_ / (double)k);
  }
  double final_average(std::uint64_t K) const { return sum_ / (double)K; }
  const std::vector<std::pair<std::uint64_t, double>>& samples() const { return samples_; }

 private:
  double sum_ = 0.0;
  std::vector<std::pair<std::uint64_t, double>> samples_;
};

// 7: the toy decay threshold. Decayed runs (lambda >= 1e-3) should plateau
// at least 5x above the converging runs (lambda in {1e-5, 0}) at K = 1e6,
// and the converging runs' running average must shrink monotonically over
// the last decade of steps.
Outcome criterion_toy_threshold() {
  const std::uint64_t K = 1000000;
  const auto problem = make_toy1d({});
  HyperParams hp;
  hp.eta = 1.0 / std::sqrt((double)K);
  hp.theta = 1.0 - hp.eta;
  hp.beta = std::sqrt(hp.theta);
  hp.tau = 1.0;
  hp.eps = 1e-10;

  const std::vector<double> plateau_lambdas{1e-1, 1e-2, 1e-3};
  const std::vector<double> low_lambdas{1e-5, 0.0};
  double plateau_min = std::numeric_limits<double>::infinity();
  double low_max = 0.0;
  bool tail_monotone = true;
  double worst_tail_change = 0.0;
  for (const double lam : plateau_lambdas) {
    hp.lambda = lam;
    RunningAverageProbe probe;
    RunConfig cfg;
    cfg.problem = problem.get();
    cfg.x1 = {6.0};
    cfg.hp = hp;
    cfg.K = K;
    cfg.seed = 0;
    cfg.log_every = K;
    cfg.observer = &probe;
    const auto t = run_experiment(cfg);
    if (t.summary.diverged) return {false, "decayed toy run diverged"};
    plateau_min = std::min(plateau_min, probe.final_average(K));
  }
  for (const double lam : low_lambdas) {
    hp.lambda = lam;
    RunningAverageProbe probe;
    RunConfig cfg;
    cfg.problem = problem.get();
    cfg.x1 = {6.0};
    cfg.hp = hp;
    cfg.K = K;
    cfg.seed = 0;
    cfg.log_every = K;
    cfg.observer = &probe;
    const auto t = run_experiment(cfg);
    if (t.summary.diverged) return {false, "undecayed toy run diverged"};
    low_max = std::max(low_max, probe.final_average(K));
    const auto& samples = probe.samples();
    std::optional<double> tail_start;
    for (std::size_t i = 1; i < samples.size(); ++i) {
      if (samples[i].first <= K / 10) continue;
      if (!tail_start) tail_start = samples[i - 1].second;
      if (samples[i].second > samples[i - 1].second * (1.0 + 1e-12)) tail_monotone = false;
    }
    if (tail_start)
      worst_tail_change = std::max(worst_tail_change, probe.final_average(K) / *tail_start);
  }
  const double separation = plateau_min / low_max;
  const bool pass = separation >= 5.0 && tail_monotone;
  return {pass,
          fmt("plateau/converging separation %.2fx (need >= 5.0x), tail monotone: %s "
              "(net last-decade change %.3fx)",
              separation, tail_monotone ? "yes" : "no", worst_tail_change)};
}

// 8: Monte-Carlo audits of the momentum-error recursion (100 checkpoints,
// M = 1e4) and the second-moment volume bound (20 replicates).
Outcome criterion_moment_audits() {
  const auto inst = unit_quadratic(10, 1.0, 1.0);
  const auto ctx3 = prescribed_context(*inst.problem, inst.x1, 2000, Variant::adamw);
  RunConfig cfg3;
  cfg3.problem = inst.problem.get();
  cfg3.x1 = inst.x1;
  cfg3.hp = ctx3.params.canonical_hp();
  cfg3.K = 2000;
  cfg3.seed = 17;
  cfg3.log_every = 2000;
  const auto r3 = audit_lemma3_on_trajectory(cfg3, 100, 10000, 20260819);

  const auto ctx4 = prescribed_context(*inst.problem, inst.x1, 1000, Variant::adamw);
  RunConfig cfg4 = cfg3;
  cfg4.hp = ctx4.params.canonical_hp();
  cfg4.K = 1000;
  cfg4.log_every = 1000;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 100; s < 120; ++s) seeds.push_back(s);
  const auto r4 = audit_lemma4(cfg4, seeds);

  const bool pass = r3.pass && r3.trials == 100 && r4.pass;
  return {pass, fmt("recursion audit %llu/%llu checkpoints clean; volume audit margin %.3g",
                    (unsigned long long)(r3.trials - r3.violations),
                    (unsigned long long)r3.trials, r4.worst_margin)};
}

// 9: lookahead-off and decay-off reductions are bit-exact over randomized
// steps, and the toy gradient oracle is unbiased.
Outcome criterion_equivalences() {
  Rng rng(424242, 0, StreamPurpose::misc);
  const std::size_t d = 8;
  auto random_hp = [&rng]() {
    HyperParams hp;
    hp.eta = std::pow(10.0, -4.0 + 2.0 * rng.uniform());
    hp.theta = 0.99 * rng.uniform();
    hp.beta = rng.uniform();
    hp.tau = rng.uniform();
    hp.lambda = rng.bernoulli(0.3) ? 0.0 : 0.1 * rng.uniform();
    hp.eps = std::pow(10.0, -12.0 + 6.0 * rng.uniform());
    hp.validate();
    return hp;
  };

  std::vector<double> x1(d);
  for (auto& xi : x1) xi = rng.normal();
  OptimizerState sa = init_state(d, x1);
  OptimizerState sn = sa;
  std::vector<double> g(d);
  std::uint64_t mismatches = 0;
  HyperParams hp = random_hp();
  for (std::uint64_t k = 1; k <= 10000; ++k) {
    if (k % 500 == 0) hp = random_hp();
    for (auto& gi : g) gi = 3.0 * rng.normal();
    HyperParams hp_tau1 = hp;
    hp_tau1.tau = 1.0;
    const auto ra = adamw_step(sa, hp, g);
    const auto rn = nadamw_step(sn, hp_tau1, g);
    if (ra.state.x != rn.state.x || ra.state.m != rn.state.m || ra.state.v != rn.state.v ||
        ra.record.update != rn.record.update)
      mismatches += 1;
    sa = ra.state;
    sn = rn.state;
  }

  std::uint64_t decay_mismatches = 0;
  for (const double tau : {1.0, 0.7}) {
    HyperParams zhp = random_hp();
    zhp.lambda = 0.0;
    zhp.tau = tau;
    OptimizerState s = init_state(d, x1);
    StepRecord rec;
    for (std::uint64_t k = 1; k <= 10000; ++k) {
      if (k % 500 == 0) {
        zhp = random_hp();
        zhp.lambda = 0.0;
        zhp.tau = tau;
      }
      for (auto& gi : g) gi = 3.0 * rng.normal();
      const std::vector<double> x_before = s.x;
      nadamw_step_inplace(s, zhp, g, &rec);
      for (std::size_t i = 0; i < d; ++i) {
        const double upd = -zhp.eta * rec.m_tilde[i] / std::sqrt(s.v[i] + zhp.eps);
        if (s.x[i] != x_before[i] + rec.update[i] || rec.update[i] != upd) decay_mismatches += 1;
      }
    }
  }

  const auto toy = make_toy1d({});
  const std::vector<double> probe_x{6.0};
  const double exact = toy->full_grad(probe_x)[0];
  Rng toy_rng(7, 0, StreamPurpose::audit);
  const std::uint64_t N = 1000000;
  double sum = 0.0, sumsq = 0.0;
  std::vector<double> sample(1);
  for (std::uint64_t i = 0; i < N; ++i) {
    toy->stoch_grad(probe_x, toy_rng, sample);
    sum += sample[0];
    sumsq += sample[0] * sample[0];
  }
  const double mean = sum / (double)N;
  const double var = (sumsq - (double)N * mean * mean) / (double)(N - 1);
  const double se = std::sqrt(var / (double)N);
  const double off = std::fabs(mean - exact) / se;
  const bool pass = mismatches == 0 && decay_mismatches == 0 && off <= 4.0;
  return {pass, fmt("tau=1 mismatches %llu, decay-off mismatches %llu, toy oracle off by %.2f se",
                    (unsigned long long)mismatches, (unsigned long long)decay_mismatches, off)};
}

// 10: the command-line runner is byte-deterministic across invocations.
Outcome criterion_determinism() {
  const fs::path scratch = "acceptance_scratch";
  std::error_code ec;
  fs::remove_all(scratch, ec);
  fs::create_directories(scratch);
  const fs::path out_dir = scratch / "c10_out";
  const std::string config_text =
      "[problem]\n"
      "kind = noisy_quadratic\n"
      "d = 4\n"
      "sigma = 1\n"
      "x1 = 1, -0.5, 0.25, 2\n"
      "\n"
      "[optimizer]\n"
      "prescribe = theorem2\n"
      "\n"
      "[run]\n"
      "K = 300\n"
      "seeds = 3, 7\n"
      "log_every = 25\n"
      "\n"
      "[output]\n"
      "dir = " + out_dir.string() + "\n";
  const fs::path cfg_path = scratch / "c10.config";
  io::write_text_file(cfg_path.string(), config_text);

  auto invoke = [&](const char* log_name) {
    const std::string cmd = std::string(NADAMW_CLI_PATH) + " run --config " + cfg_path.string() +
                            " > " + (scratch / log_name).string() + " 2>&1";
    return std::system(cmd.c_str());
  };
  auto snapshot = [&]() {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::directory_iterator(out_dir)) {
      std::ifstream in(entry.path(), std::ios::binary);
      std::ostringstream body;
      body << in.rdbuf();
      files[entry.path().filename().string()] = body.str();
    }
    return files;
  };

  if (invoke("run1.log") != 0) return {false, "first invocation exited nonzero"};
  const auto first = snapshot();
  if (first.size() < 4) return {false, fmt("expected >= 4 artifacts, found %zu", first.size())};
  if (invoke("run2.log") != 0) return {false, "second invocation exited nonzero"};
  const auto second = snapshot();

  std::uint64_t differing = 0;
  if (first.size() != second.size()) differing += 1;
  for (const auto& [name, body] : first) {
    const auto it = second.find(name);
    if (it == second.end() || it->second != body) differing += 1;
  }
  return {differing == 0,
          fmt("%zu artifacts, %llu differ between invocations", first.size(),
              (unsigned long long)differing)};
}

}  // namespace

int main() {
  int failures = 0;
  int index = 0;
  auto report = [&](const char* name, const Outcome& o, double secs) {
    index += 1;
    std::printf("[%2d/10] %s  %s: %s (%.1fs)\n", index, o.pass ? "PASS" : "FAIL", name,
                o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) failures += 1;
  };
  auto run_one = [&](const char* name, Outcome (*fn)()) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(name, o, seconds_since(t0));
  };

  run_one("ratio stress", &criterion_ratio_stress);
  {
    const auto t0 = std::chrono::steady_clock::now();
    GridOutcome grid;
    try {
      grid = criteria_envelope_and_bound();
    } catch (const std::exception& e) {
      grid.envelope = {false, std::string("exception: ") + e.what()};
      grid.bound = grid.envelope;
    }
    const double secs = seconds_since(t0);
    report("decay envelope", grid.envelope, secs);
    report("mean-gradient bound", grid.bound, secs);
  }
  run_one("rate exponent", &criterion_rate_exponent);
  run_one("dimension scaling", &criterion_dimension_scaling);
  run_one("gaussian norm ratio", &criterion_gaussian_ratio);
  run_one("toy decay threshold", &criterion_toy_threshold);
  run_one("moment audits", &criterion_moment_audits);
  run_one("reductions and oracle bias", &criterion_equivalences);
  run_one("command-line determinism", &criterion_determinism);

  std::printf("criteria passed: %d/10\n", 10 - failures);
  return failures;
}
