#include "nadamw/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

namespace nadamw {

namespace {

constexpr double kDivergenceInf = 1e12;

double linf(std::span<const double> x) {
  double m = 0.0;
  for (double xi : x) m = std::max(m, std::abs(xi));
  return m;
}

double l1(std::span<const double> x) {
  double s = 0.0;
  for (double xi : x) s += std::abs(xi);
  return s;
}

double l2(std::span<const double> x) {
  double s = 0.0;
  for (double xi : x) s += xi * xi;
  return std::sqrt(s);
}

}  // namespace

void RunConfig::validate() const {
  if (!problem) throw std::invalid_argument("RunConfig: problem must be set");
  if (x1.size() != problem->dim())
    throw std::invalid_argument("RunConfig: x1 has length " + std::to_string(x1.size()) +
                                ", problem dimension is " + std::to_string(problem->dim()));
  if (K < 1) throw std::invalid_argument("RunConfig: K must be >= 1");
  if (log_every < 1 || log_every > K)
    throw std::invalid_argument("RunConfig: log_every must lie in [1, K]");
  hp.validate();
}

Trajectory run_experiment(const RunConfig& cfg) {
  cfg.validate();
  const Problem& problem = *cfg.problem;
  const std::size_t d = problem.dim();
  const ProblemConstants constants = problem.constants();

  Trajectory out;
  out.seed = cfg.seed;
  out.bound = cfg.bound;

  OptimizerState state = init_state(d, cfg.x1);
  Rng rng(cfg.seed, 0, StreamPurpose::training);
  auto sampler = problem.make_sampler();

  std::vector<double> gfull(d), g(d), x_prev;
  StepRecord rec;
  double sum_grad_l1 = 0.0;
  double noise_sup = 0.0;
  TrajectorySummary& s = out.summary;

  for (std::uint64_t k = 1; k <= cfg.K; ++k) {
    const double x_inf = linf(state.x);
    if (!std::isfinite(x_inf) || x_inf > kDivergenceInf) {
      s.diverged = true;
      break;
    }
    problem.full_grad(state.x, gfull);
    const double grad_l1 = l1(gfull);
    if (!std::isfinite(grad_l1)) {
      s.diverged = true;
      break;
    }
    sum_grad_l1 += grad_l1;

    const double lambda_x_inf = cfg.hp.lambda * x_inf;
    s.max_lambda_x_inf = std::max(s.max_lambda_x_inf, lambda_x_inf);
    if (lambda_x_inf >= 1.0) s.x_inf_always_below_1_over_lambda = false;
    if (constants.sigma_state_dependent)
      noise_sup = std::max(noise_sup, problem.noise_sq_at(state.x));

    sampler->sample(state.x, rng, g);

    const bool log_now = (k == 1) || (k == cfg.K) || (k % cfg.log_every == 0);
    MetricsRow row;
    if (log_now) {
      row.k = k;
      row.loss = problem.full_loss(state.x);
      row.grad_l1 = grad_l1;
      row.grad_l2 = l2(gfull);
      row.ratio = grad_norm_ratio(gfull);
      row.x_inf = x_inf;
      row.lambda_x_inf = lambda_x_inf;
      row.kkt = kkt_residual(state.x, gfull, cfg.hp.lambda);
      double nsq = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double e = g[i] - gfull[i];
        nsq += e * e;
      }
      row.noise_sq = nsq;
    }

    if (cfg.observer) x_prev = state.x;
    try {
      nadamw_step_inplace(state, cfg.hp, g, &rec);
    } catch (const std::invalid_argument&) {
      s.diverged = true;
      break;
    } catch (const std::runtime_error&) {
      s.diverged = true;
      break;
    }
    s.steps_completed = k;

    if (cfg.observer) cfg.observer->on_step(k, x_prev, state, rec, g, gfull);
    if (log_now) {
      row.ratio_max_lemma2 = rec.ratio_max;
      out.rows.push_back(std::move(row));
    }
  }

  s.mean_grad_l1 = s.steps_completed > 0 ? sum_grad_l1 / static_cast<double>(s.steps_completed) : 0.0;
  s.noise_sq_sup_observed = constants.sigma_state_dependent ? noise_sup : constants.sigma_s_sq;
  if (cfg.bound) {
    const BoundValues b = bound_rhs(cfg.bound->inputs, cfg.bound->params.variant);
    s.bound_rhs = b.applicable();
    s.bound_satisfied = !s.diverged && s.steps_completed == cfg.K && s.mean_grad_l1 <= *s.bound_rhs;
  }
  return out;
}

double kkt_residual(std::span<const double> x, std::span<const double> grad, double lambda) {
  if (x.size() != grad.size())
    throw std::invalid_argument("kkt_residual: x and grad must have the same length");
  double inner = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) inner += x[i] * grad[i];
  return lambda * inner + l1(grad);
}

std::optional<double> grad_norm_ratio(std::span<const double> grad) {
  const double denom = l2(grad);
  if (denom == 0.0) return std::nullopt;
  return l1(grad) / denom;
}

RateFit fit_rate_slope(std::span<const std::pair<std::uint64_t, double>> points) {
  if (points.size() < 3) throw std::invalid_argument("fit_rate_slope: need at least 3 points");
  std::vector<double> xs, ys;
  xs.reserve(points.size());
  ys.reserve(points.size());
  for (const auto& [K, y] : points) {
    if (K < 1) throw std::invalid_argument("fit_rate_slope: K must be positive");
    if (!(y > 0.0) || !std::isfinite(y))
      throw std::invalid_argument("fit_rate_slope: values must be positive and finite");
    xs.push_back(std::log(static_cast<double>(K)));
    ys.push_back(std::log(y));
  }
  {
    std::vector<double> sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw std::invalid_argument("fit_rate_slope: K values must be distinct");
  }
  const double mx = mean_of(xs);
  const double my = mean_of(ys);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

const char* sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::K: return "K";
    case SweepAxis::d: return "d";
    case SweepAxis::lambda: return "lambda";
  }
  return "?";
}

SweepAxis sweep_axis_from_name(const std::string& name) {
  if (name == "K" || name == "k") return SweepAxis::K;
  if (name == "d") return SweepAxis::d;
  if (name == "lambda") return SweepAxis::lambda;
  throw std::invalid_argument("unknown sweep axis '" + name + "' (expected K, d, or lambda)");
}

void SweepSpec::validate() const {
  if (values.empty()) throw std::invalid_argument("SweepSpec: values must be nonempty");
  if (seeds.empty()) throw std::invalid_argument("SweepSpec: seeds must be nonempty");
  if (!factory) throw std::invalid_argument("SweepSpec: factory must be set");
  if (log_every < 1) throw std::invalid_argument("SweepSpec: log_every must be >= 1");
  const bool has_explicit = explicit_hp.has_value();
  const bool has_prescribe = prescribe.has_value();
  if (has_explicit == has_prescribe)
    throw std::invalid_argument("SweepSpec: exactly one of explicit_hp or prescribe must be set");
  if (axis != SweepAxis::K && base_K < 1)
    throw std::invalid_argument("SweepSpec: base_K must be >= 1");
  if (axis != SweepAxis::d && base_d < 1)
    throw std::invalid_argument("SweepSpec: base_d must be >= 1");
  if (axis == SweepAxis::K || axis == SweepAxis::d) {
    for (double v : values)
      if (!(v >= 1.0) || v != std::floor(v))
        throw std::invalid_argument("SweepSpec: K/d values must be positive integers");
  } else {
    for (double v : values)
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("SweepSpec: lambda values must be nonnegative and finite");
  }
}

namespace {

SweepRun execute_sweep_run(const SweepSpec& spec, std::size_t value_index, std::uint64_t seed) {
  const double value = spec.values[value_index];
  const std::uint64_t K = spec.axis == SweepAxis::K ? static_cast<std::uint64_t>(value) : spec.base_K;
  const std::uint64_t d = spec.axis == SweepAxis::d ? static_cast<std::uint64_t>(value) : spec.base_d;

  ProblemInstance instance = spec.factory(d);
  if (!instance.problem) throw std::invalid_argument("sweep: factory returned no problem");

  RunConfig cfg;
  cfg.problem = instance.problem.get();
  cfg.x1 = instance.x1;
  cfg.K = K;
  cfg.seed = seed;
  cfg.log_every = std::min<std::uint64_t>(spec.log_every, K);
  cfg.variant = spec.variant;

  if (spec.explicit_hp) {
    cfg.hp = *spec.explicit_hp;
  } else {
    const ProblemConstants c = instance.problem->constants();
    if (c.sigma_state_dependent)
      throw std::invalid_argument(
          "sweep: this problem's noise level is state-dependent; prescription needs an explicit "
          "sigma estimate, use explicit hyperparameters instead");
    PrescriptionInputs inputs;
    inputs.K = K;
    inputs.d = d;
    inputs.L = c.L;
    inputs.delta = instance.problem->full_loss(instance.x1) - c.f_star;
    inputs.sigma_s_sq = c.sigma_s_sq;
    inputs.gamma = spec.prescribe->gamma;
    PrescribedParams p = prescribe(inputs, spec.prescribe->variant);
    cfg.hp = p.canonical_hp();
    cfg.hp.lambda *= spec.prescribe->lambda_scale;
    cfg.bound = BoundContext{inputs, p};
  }
  if (spec.axis == SweepAxis::lambda) cfg.hp.lambda = value;

  SweepRun run;
  run.value_index = value_index;
  run.value = value;
  run.seed = seed;
  run.trajectory = run_experiment(cfg);
  return run;
}

}  // namespace

SweepResult sweep(const SweepSpec& spec) {
  spec.validate();
  const std::size_t n_values = spec.values.size();
  const std::size_t n_seeds = spec.seeds.size();
  const std::size_t n_tasks = n_values * n_seeds;

  SweepResult result;
  result.axis = spec.axis;
  result.runs.resize(n_tasks);

  const int jobs = std::max(1, std::min<int>(spec.jobs, static_cast<int>(n_tasks)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&]() {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= n_tasks) return;
      const std::size_t vi = t / n_seeds;
      const std::size_t si = t % n_seeds;
      try {
        result.runs[t] = execute_sweep_run(spec, vi, spec.seeds[si]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  result.aggregates.reserve(n_values);
  for (std::size_t vi = 0; vi < n_values; ++vi) {
    SweepAggregate agg;
    agg.value = spec.values[vi];
    std::vector<double> means;
    for (std::size_t si = 0; si < n_seeds; ++si) {
      const SweepRun& run = result.runs[vi * n_seeds + si];
      if (run.trajectory.summary.diverged) {
        agg.diverged += 1;
      } else {
        means.push_back(run.trajectory.summary.mean_grad_l1);
      }
    }
    agg.runs = means.size();
    agg.mean_grad_l1_mean = mean_of(means);
    agg.mean_grad_l1_stderr = stderr_of(means);
    result.aggregates.push_back(agg);
  }
  return result;
}

double mean_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double stderr_of(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  const double var = ss / static_cast<double>(n - 1);
  return std::sqrt(var / static_cast<double>(n));
}

}  // namespace nadamw
