#include "nadamw/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>

namespace nadamw {

namespace {

constexpr double kSlack = 1e-9;
constexpr std::size_t kMaxDetails = 16;

std::string fmt(const char* format, ...) {
  char buf[256];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof(buf), format, args);
  va_end(args);
  return std::string(buf);
}

double linf(std::span<const double> x) {
  double m = 0.0;
  for (double xi : x) m = std::max(m, std::abs(xi));
  return m;
}

void note(std::vector<std::string>& details, std::string text) {
  if (details.size() < kMaxDetails) details.push_back(std::move(text));
}

}  // namespace

bool Lemma2Monitor::applicable(const HyperParams& hp) {
  const double sqrt_theta = std::sqrt(hp.theta);
  if (!(hp.theta <= hp.tau && hp.tau <= 1.0)) return false;
  if (!(hp.theta <= hp.beta && hp.beta <= sqrt_theta * (1.0 + 1e-12))) return false;
  return sqrt_theta < 1.0;
}

Lemma2Monitor::Lemma2Monitor(const HyperParams& hp) : hp_(hp) {
  hp.validate();
  if (!applicable(hp))
    throw std::invalid_argument(
        "Lemma2Monitor: needs theta <= tau <= 1 and theta <= beta <= sqrt(theta) < 1; "
        "these hyperparameters are outside that region, so the monitored facts need not hold");
  worst_margin_ = -std::numeric_limits<double>::infinity();
}

void Lemma2Monitor::on_step(std::uint64_t k, std::span<const double> x_before,
                            const OptimizerState& after, const StepRecord& rec,
                            std::span<const double> g, std::span<const double> full_grad) {
  (void)g;
  (void)full_grad;
  if (!started_) {
    if (k != 1)
      throw std::logic_error("Lemma2Monitor: must observe a run from its first step");
    x1_inf_ = linf(x_before);
    started_ = true;
  }
  if (rec.ratio_max) {
    trials_ += 1;
    const double margin = *rec.ratio_max - 8.0 * (1.0 + kSlack);
    worst_margin_ = std::max(worst_margin_, margin);
    if (margin > 0.0) {
      violations_ += 1;
      note(details_, fmt("step %llu: ratio %.17g > 8", static_cast<unsigned long long>(k),
                         *rec.ratio_max));
    }
  }
  if (hp_.lambda > 0.0) {
    trials_ += 1;
    decay_pow_ *= 1.0 - hp_.eta * hp_.lambda;
    const double shift = 3.0 / hp_.lambda;
    const double lhs = linf(after.x) - shift;
    const double rhs = decay_pow_ * (x1_inf_ - shift);
    const double tol = kSlack * (shift + x1_inf_);
    const double margin = lhs - (rhs + tol);
    worst_margin_ = std::max(worst_margin_, margin);
    if (margin > 0.0) {
      violations_ += 1;
      note(details_, fmt("step %llu: envelope lhs %.17g > rhs %.17g",
                         static_cast<unsigned long long>(k), lhs, rhs));
    }
  }
}

LemmaReport Lemma2Monitor::report() const {
  LemmaReport r;
  r.lemma = "lemma2";
  r.trials = trials_;
  r.violations = violations_;
  r.worst_margin = trials_ > 0 ? worst_margin_ : 0.0;
  r.pass = violations_ == 0;
  r.details = details_;
  return r;
}

LemmaReport run_lemma2_stress(const Lemma2StressSpec& spec) {
  if (spec.triples < 1 || spec.steps_per_triple < 1 || spec.d < 1)
    throw std::invalid_argument("run_lemma2_stress: triples, steps, d must be positive");

  LemmaReport r;
  r.lemma = "lemma2";
  r.worst_margin = -std::numeric_limits<double>::infinity();

  const std::size_t d = spec.d;
  std::vector<double> g(d), base(d), x1(d);
  StepRecord rec;

  for (std::uint64_t t = 0; t < spec.triples; ++t) {
    Rng rng(spec.seed, t, StreamPurpose::audit);
    HyperParams hp;
    hp.theta = 0.999 * rng.uniform();
    const double sqrt_theta = std::sqrt(hp.theta);
    hp.beta = hp.theta + rng.uniform() * (sqrt_theta - hp.theta);
    hp.tau = hp.theta + rng.uniform() * (1.0 - hp.theta);
    hp.eta = std::pow(10.0, -6.0 * rng.uniform());
    hp.lambda = rng.uniform() < 0.3
                    ? 0.0
                    : std::min(std::pow(10.0, -4.0 * rng.uniform()), 0.9 / hp.eta);
    hp.eps = std::pow(10.0, -12.0 * rng.uniform());
    hp.validate();

    const double radius = 10.0 * rng.uniform();
    for (auto& xi : x1) xi = radius * (2.0 * rng.uniform() - 1.0);
    OptimizerState state = init_state(d, x1);
    const double x1_inf = linf(x1);
    const double shift = hp.lambda > 0.0 ? 3.0 / hp.lambda : 0.0;
    const double decay = 1.0 - hp.eta * hp.lambda;
    double decay_pow = 1.0;

    const int stream = static_cast<int>(t % 5);
    const double scale = std::pow(10.0, 3.0 * rng.uniform() - 1.0);
    for (auto& gi : base) gi = scale * rng.normal();
    double sign = 1.0;

    for (std::uint64_t k = 1; k <= spec.steps_per_triple; ++k) {
      switch (stream) {
        case 0:
          for (auto& gi : g) gi = rng.normal();
          break;
        case 1:
          for (auto& gi : g) gi = scale * (2.0 * rng.uniform() - 1.0);
          break;
        case 2:
          for (std::size_t i = 0; i < d; ++i) g[i] = base[i];
          break;
        case 3:
          sign = -sign;
          for (std::size_t i = 0; i < d; ++i) g[i] = sign * base[i];
          break;
        default: {
          const bool spike = rng.uniform() < 1.0 / 64.0;
          const double amp = spike ? 1e3 : 1e-3;
          for (std::size_t i = 0; i < d; ++i) g[i] = amp * base[i];
          break;
        }
      }
      nadamw_step_inplace(state, hp, g, &rec);

      if (rec.ratio_max) {
        r.trials += 1;
        const double margin = *rec.ratio_max - 8.0 * (1.0 + kSlack);
        r.worst_margin = std::max(r.worst_margin, margin);
        if (margin > 0.0) {
          r.violations += 1;
          note(r.details, fmt("triple %llu step %llu: ratio %.17g > 8",
                              static_cast<unsigned long long>(t),
                              static_cast<unsigned long long>(k), *rec.ratio_max));
        }
      }
      if (hp.lambda > 0.0) {
        r.trials += 1;
        decay_pow *= decay;
        const double lhs = linf(state.x) - shift;
        const double rhs = decay_pow * (x1_inf - shift);
        const double tol = kSlack * (shift + x1_inf);
        const double margin = lhs - (rhs + tol);
        r.worst_margin = std::max(r.worst_margin, margin);
        if (margin > 0.0) {
          r.violations += 1;
          note(r.details, fmt("triple %llu step %llu: envelope lhs %.17g > rhs %.17g",
                              static_cast<unsigned long long>(t),
                              static_cast<unsigned long long>(k), lhs, rhs));
        }
      }
    }
  }
  if (r.trials == 0) r.worst_margin = 0.0;
  r.pass = r.violations == 0;
  return r;
}

CheckpointCollector::CheckpointCollector(std::vector<std::uint64_t> capture_steps)
    : steps_(std::move(capture_steps)) {
  for (std::size_t i = 1; i < steps_.size(); ++i)
    if (steps_[i] <= steps_[i - 1])
      throw std::invalid_argument("CheckpointCollector: capture steps must be strictly increasing");
  checkpoints_.reserve(steps_.size());
}

void CheckpointCollector::on_step(std::uint64_t k, std::span<const double> x_before,
                                  const OptimizerState& after, const StepRecord& rec,
                                  std::span<const double> g, std::span<const double> full_grad) {
  (void)g;
  (void)full_grad;
  if (pos_ >= steps_.size() || k != steps_[pos_]) return;
  pos_ += 1;
  FrozenStep fs;
  fs.k = k;
  fs.x_prev.assign(x_before.begin(), x_before.end());
  fs.m_prev = after.m;
  fs.v_prev = after.v;
  fs.m_tilde_prev = rec.m_tilde;
  fs.x_next = after.x;
  checkpoints_.push_back(std::move(fs));
}

LemmaReport audit_lemma3(const FrozenStep& fs, const Problem& problem, const HyperParams& hp,
                         std::uint64_t M, Rng& rng) {
  if (M < 100) throw std::invalid_argument("audit_lemma3: M must be >= 100");
  if (fs.k < 1) throw std::invalid_argument("audit_lemma3: checkpoint has no completed step");
  if (!(hp.theta <= hp.tau && hp.tau <= 1.0))
    throw std::invalid_argument("audit_lemma3: needs theta <= tau <= 1");
  const std::size_t d = problem.dim();
  if (fs.x_prev.size() != d || fs.m_prev.size() != d || fs.v_prev.size() != d ||
      fs.m_tilde_prev.size() != d || fs.x_next.size() != d)
    throw std::invalid_argument("audit_lemma3: checkpoint dimension mismatch");

  const ProblemConstants c = problem.constants();
  const std::vector<double> grad_prev = problem.full_grad(fs.x_prev);
  const std::vector<double> grad_next = problem.full_grad(fs.x_next);

  double base = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double e = fs.m_prev[i] - grad_prev[i];
    base += e * e;
  }
  double sum_t = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double root = std::sqrt(fs.v_prev[i] + hp.eps);
    const double num = fs.m_tilde_prev[i] + hp.lambda * fs.x_prev[i] * root;
    sum_t += num * num / root;
  }
  const double mid = c.L * c.L * hp.eta * hp.eta / (std::sqrt(hp.eps) * (1.0 - hp.theta)) * sum_t;
  const double noise = problem.noise_sq_at(fs.x_next);
  const double rhs_m = hp.theta * base + mid + (1.0 - hp.theta) * (1.0 - hp.theta) * noise;
  const double rhs_mt = hp.theta * base + mid + 2.0 * (1.0 - hp.theta) * noise;

  std::vector<double> g(d);
  double s1 = 0.0, s1sq = 0.0, s2 = 0.0, s2sq = 0.0;
  for (std::uint64_t s = 0; s < M; ++s) {
    problem.stoch_grad(fs.x_next, rng, g);
    double a1 = 0.0, a2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double mk = hp.theta * fs.m_prev[i] + (1.0 - hp.theta) * g[i];
      const double mtk = hp.tau * mk + (1.0 - hp.tau) * g[i];
      const double e1 = mk - grad_next[i];
      const double e2 = mtk - grad_next[i];
      a1 += e1 * e1;
      a2 += e2 * e2;
    }
    s1 += a1;
    s1sq += a1 * a1;
    s2 += a2;
    s2sq += a2 * a2;
  }
  const double n = static_cast<double>(M);
  const double mean1 = s1 / n;
  const double mean2 = s2 / n;
  const double se1 = std::sqrt(std::max(0.0, (s1sq - n * mean1 * mean1) / (n - 1.0)) / n);
  const double se2 = std::sqrt(std::max(0.0, (s2sq - n * mean2 * mean2) / (n - 1.0)) / n);

  LemmaReport r;
  r.lemma = "lemma3";
  r.trials = 2;
  const double margin1 = mean1 - (rhs_m + 4.0 * se1);
  const double margin2 = mean2 - (rhs_mt + 4.0 * se2);
  r.worst_margin = std::max(margin1, margin2);
  if (margin1 > 0.0) r.violations += 1;
  if (margin2 > 0.0) r.violations += 1;
  r.pass = r.violations == 0;
  note(r.details, fmt("step %llu m: lhs %.10g rhs %.10g stderr %.4g",
                      static_cast<unsigned long long>(fs.k + 1), mean1, rhs_m, se1));
  note(r.details, fmt("step %llu m_tilde: lhs %.10g rhs %.10g stderr %.4g",
                      static_cast<unsigned long long>(fs.k + 1), mean2, rhs_mt, se2));
  return r;
}

LemmaReport audit_lemma3_on_trajectory(const RunConfig& cfg, std::uint64_t n_checkpoints,
                                       std::uint64_t M, std::uint64_t audit_seed) {
  cfg.validate();
  if (cfg.observer)
    throw std::invalid_argument("audit_lemma3_on_trajectory: cfg.observer slot is reserved");
  if (n_checkpoints < 1 || n_checkpoints > cfg.K)
    throw std::invalid_argument("audit_lemma3_on_trajectory: n_checkpoints must lie in [1, K]");

  std::vector<std::uint64_t> steps;
  if (n_checkpoints == cfg.K) {
    steps.resize(cfg.K);
    for (std::uint64_t k = 1; k <= cfg.K; ++k) steps[k - 1] = k;
  } else {
    Rng pick(audit_seed, 0, StreamPurpose::misc);
    std::set<std::uint64_t> chosen;
    while (chosen.size() < n_checkpoints) chosen.insert(1 + pick.below(cfg.K));
    steps.assign(chosen.begin(), chosen.end());
  }

  CheckpointCollector collector(std::move(steps));
  RunConfig local = cfg;
  local.observer = &collector;
  const Trajectory traj = run_experiment(local);
  if (traj.summary.diverged)
    throw std::runtime_error("audit_lemma3_on_trajectory: the run diverged");

  LemmaReport r;
  r.lemma = "lemma3";
  r.worst_margin = -std::numeric_limits<double>::infinity();
  std::uint64_t index = 0;
  for (const FrozenStep& fs : collector.checkpoints()) {
    Rng rng(audit_seed, 1 + index, StreamPurpose::audit);
    index += 1;
    const LemmaReport one = audit_lemma3(fs, *cfg.problem, cfg.hp, M, rng);
    r.trials += 1;
    r.worst_margin = std::max(r.worst_margin, one.worst_margin);
    if (one.violations > 0) {
      r.violations += 1;
      for (const auto& dline : one.details) note(r.details, dline);
    }
  }
  if (r.trials == 0) r.worst_margin = 0.0;
  r.pass = r.violations * 100 <= r.trials;
  note(r.details, fmt("checkpoints %llu violated %llu (pass needs >= 99%% clean)",
                      static_cast<unsigned long long>(r.trials),
                      static_cast<unsigned long long>(r.violations)));
  return r;
}

Lemma4Accumulator::Lemma4Accumulator(const Problem& problem, const HyperParams& hp) : hp_(hp) {
  const ProblemConstants c = problem.constants();
  if (c.sigma_state_dependent)
    throw std::invalid_argument(
        "Lemma4Accumulator: needs a problem with state-independent noise levels");
  sigma_sq_.resize(c.sigma.size());
  for (std::size_t i = 0; i < c.sigma.size(); ++i) sigma_sq_[i] = c.sigma[i] * c.sigma[i];
  sigma_l1_ = c.sigma_l1;
  prev_v_.assign(c.sigma.size(), 0.0);
}

void Lemma4Accumulator::on_step(std::uint64_t k, std::span<const double> x_before,
                                const OptimizerState& after, const StepRecord& rec,
                                std::span<const double> g, std::span<const double> full_grad) {
  (void)k;
  (void)x_before;
  (void)rec;
  (void)g;
  for (std::size_t i = 0; i < prev_v_.size(); ++i) {
    const double gf_sq = full_grad[i] * full_grad[i];
    const double vt = hp_.beta * prev_v_[i] + (1.0 - hp_.beta) * (gf_sq + sigma_sq_[i]);
    const double root = std::sqrt(vt + hp_.eps);
    lhs_ += root;
    grad_term_ += gf_sq / root;
  }
  prev_v_ = after.v;
  steps_ += 1;
}

double Lemma4Accumulator::rhs() const {
  const double K = static_cast<double>(steps_);
  const double d = static_cast<double>(prev_v_.size());
  return K * sigma_l1_ + K * d * std::sqrt(hp_.eps) + 2.0 * grad_term_;
}

LemmaReport audit_lemma4(const RunConfig& cfg, std::span<const std::uint64_t> seeds) {
  cfg.validate();
  if (cfg.observer) throw std::invalid_argument("audit_lemma4: cfg.observer slot is reserved");
  if (seeds.size() < 10) throw std::invalid_argument("audit_lemma4: needs at least 10 replicates");

  std::vector<double> lhs, rhs, diff;
  lhs.reserve(seeds.size());
  rhs.reserve(seeds.size());
  diff.reserve(seeds.size());
  for (std::uint64_t seed : seeds) {
    Lemma4Accumulator acc(*cfg.problem, cfg.hp);
    RunConfig local = cfg;
    local.seed = seed;
    local.observer = &acc;
    const Trajectory traj = run_experiment(local);
    if (traj.summary.diverged)
      throw std::runtime_error("audit_lemma4: a replicate diverged");
    lhs.push_back(acc.lhs());
    rhs.push_back(acc.rhs());
    diff.push_back(acc.lhs() - acc.rhs());
  }
  const double mean_lhs = mean_of(lhs);
  const double mean_rhs = mean_of(rhs);
  const double se = stderr_of(diff);

  LemmaReport r;
  r.lemma = "lemma4";
  r.trials = seeds.size();
  r.worst_margin = mean_lhs - (1.05 * mean_rhs + 4.0 * se);
  r.violations = r.worst_margin > 0.0 ? 1 : 0;
  r.pass = r.violations == 0;
  note(r.details, fmt("mean lhs %.10g mean rhs %.10g ratio %.4f stderr %.4g", mean_lhs, mean_rhs,
                      mean_rhs > 0.0 ? mean_lhs / mean_rhs : 0.0, se));
  return r;
}

GaussianRatioReport mc_gaussian_ratio(std::uint64_t d, std::uint64_t N, std::uint64_t seed) {
  if (d < 1) throw std::invalid_argument("mc_gaussian_ratio: d must be >= 1");
  if (N < 10'000) throw std::invalid_argument("mc_gaussian_ratio: N must be >= 10^4");

  Rng rng(seed, 0, StreamPurpose::audit);
  double s1 = 0.0, s1sq = 0.0, s2 = 0.0, s2sq = 0.0;
  for (std::uint64_t s = 0; s < N; ++s) {
    double a1 = 0.0, a2 = 0.0;
    for (std::uint64_t i = 0; i < d; ++i) {
      const double x = rng.normal();
      a1 += std::abs(x);
      a2 += x * x;
    }
    const double norm2 = std::sqrt(a2);
    s1 += a1;
    s1sq += a1 * a1;
    s2 += norm2;
    s2sq += norm2 * norm2;
  }
  const double n = static_cast<double>(N);

  GaussianRatioReport r;
  r.d = d;
  r.N = N;
  r.mean_l1 = s1 / n;
  r.mean_l2 = s2 / n;
  r.mean_l1_stderr = std::sqrt(std::max(0.0, (s1sq - n * r.mean_l1 * r.mean_l1) / (n - 1.0)) / n);
  r.mean_l2_stderr = std::sqrt(std::max(0.0, (s2sq - n * r.mean_l2 * r.mean_l2) / (n - 1.0)) / n);
  r.ratio = r.mean_l1 / r.mean_l2;
  const double dd = static_cast<double>(d);
  r.bound = std::sqrt(2.0 * dd / std::numbers::pi);
  r.oracle_mean_l1 = dd * std::sqrt(2.0 / std::numbers::pi);
  r.oracle_mean_l2 =
      std::exp(0.5 * std::log(2.0) + std::lgamma((dd + 1.0) / 2.0) - std::lgamma(dd / 2.0));
  r.oracle_ratio = r.oracle_mean_l1 / r.oracle_mean_l2;
  r.pass = r.ratio >= r.bound;
  return r;
}

LemmaSuiteResult run_default_lemma_suite(std::uint64_t seed) {
  LemmaSuiteResult out;

  Lemma2StressSpec stress;
  stress.triples = 100;
  stress.steps_per_triple = 100'000;
  stress.d = 4;
  stress.seed = seed;
  out.lemma2 = run_lemma2_stress(stress);

  const std::size_t d = 10;
  NoisyQuadraticParams qp;
  qp.curvatures.assign(d, 1.0);
  qp.x_star.assign(d, 0.0);
  qp.sigma.assign(d, 1.0);
  const auto problem = make_noisy_quadratic(qp);
  const std::vector<double> x1(d, 1.0);

  {
    PrescriptionInputs inputs;
    inputs.K = 2000;
    inputs.d = d;
    inputs.L = 1.0;
    inputs.delta = problem->full_loss(x1);
    inputs.sigma_s_sq = static_cast<double>(d);
    inputs.gamma = 1.0;
    const PrescribedParams p = prescribe(inputs, Variant::adamw);
    RunConfig cfg;
    cfg.problem = problem.get();
    cfg.x1 = x1;
    cfg.hp = p.canonical_hp();
    cfg.K = inputs.K;
    cfg.seed = seed;
    cfg.log_every = inputs.K;
    out.lemma3 = audit_lemma3_on_trajectory(cfg, 20, 10'000, seed);
  }
  {
    PrescriptionInputs inputs;
    inputs.K = 1000;
    inputs.d = d;
    inputs.L = 1.0;
    inputs.delta = problem->full_loss(x1);
    inputs.sigma_s_sq = static_cast<double>(d);
    inputs.gamma = 1.0;
    const PrescribedParams p = prescribe(inputs, Variant::adamw);
    RunConfig cfg;
    cfg.problem = problem.get();
    cfg.x1 = x1;
    cfg.hp = p.canonical_hp();
    cfg.K = inputs.K;
    cfg.log_every = inputs.K;
    std::vector<std::uint64_t> seeds(20);
    for (std::size_t j = 0; j < seeds.size(); ++j) seeds[j] = seed + 1 + j;
    out.lemma4 = audit_lemma4(cfg, seeds);
  }
  out.gaussian = mc_gaussian_ratio(100, 100'000, seed);
  out.all_pass =
      out.lemma2.pass && out.lemma3.pass && out.lemma4.pass && out.gaussian.pass;
  return out;
}

}  // namespace nadamw
