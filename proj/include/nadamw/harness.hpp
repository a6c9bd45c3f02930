#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nadamw/optim.hpp"
#include "nadamw/prescribe.hpp"
#include "nadamw/problems.hpp"

namespace nadamw {

// Hook into the training loop. Called once per executed step k (1-based);
// x_before is x^k, after holds x^{k+1}/m^k/v^k, rec the step internals, g the
// stochastic gradient used, full_grad the exact gradient at x^k.
class StepObserver {
 public:
  virtual ~StepObserver() = default;
  virtual void on_step(std::uint64_t k, std::span<const double> x_before,
                       const OptimizerState& after, const StepRecord& rec,
                       std::span<const double> g, std::span<const double> full_grad) = 0;
};

// Prescription a run was configured from, kept so summaries can compare
// against the guaranteed bound.
struct BoundContext {
  PrescriptionInputs inputs;
  PrescribedParams params;
};

struct RunConfig {
  const Problem* problem = nullptr;
  std::vector<double> x1;
  HyperParams hp;
  std::uint64_t K = 0;
  std::uint64_t seed = 0;
  std::uint64_t log_every = 1;
  Variant variant = Variant::adamw;
  std::optional<BoundContext> bound;
  StepObserver* observer = nullptr;

  void validate() const;
};

// Exact metrics at a frozen iterate x^k (pre-step). ratio and noise_sq are
// absent when undefined (zero gradient; no stochastic sample taken);
// ratio_max_lemma2 is the step's max_i m_tilde_i^2 / v_i, absent while v = 0.
struct MetricsRow {
  std::uint64_t k = 0;
  double loss = 0.0;
  double grad_l1 = 0.0;
  double grad_l2 = 0.0;
  std::optional<double> ratio;
  double x_inf = 0.0;
  double lambda_x_inf = 0.0;
  double kkt = 0.0;
  std::optional<double> noise_sq;
  std::optional<double> ratio_max_lemma2;
};

struct TrajectorySummary {
  double mean_grad_l1 = 0.0;
  std::optional<double> bound_rhs;
  std::optional<bool> bound_satisfied;
  bool x_inf_always_below_1_over_lambda = true;
  double max_lambda_x_inf = 0.0;
  double noise_sq_sup_observed = 0.0;
  bool diverged = false;
  std::uint64_t steps_completed = 0;
};

struct Trajectory {
  std::string config_echo;
  std::uint64_t seed = 0;
  std::optional<BoundContext> bound;
  std::vector<MetricsRow> rows;
  TrajectorySummary summary;
};

// Runs K steps with a training sampler and a logging pass on frozen iterates.
// The full gradient is evaluated at every step, so mean_grad_l1 averages all
// K iterates, not only the logged ones. Divergence (nonfinite state or
// ||x||_inf > 1e12) truncates the run and flags the summary instead of
// throwing.
Trajectory run_experiment(const RunConfig& cfg);

double kkt_residual(std::span<const double> x, std::span<const double> grad, double lambda);

// ||g||_1 / ||g||_2; absent for the zero vector.
std::optional<double> grad_norm_ratio(std::span<const double> grad);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Least squares of ln(avg_grad_l1) on ln(K). Needs >= 3 points with distinct
// K and positive values.
RateFit fit_rate_slope(std::span<const std::pair<std::uint64_t, double>> points);

enum class SweepAxis { K, d, lambda };

const char* sweep_axis_name(SweepAxis axis);
SweepAxis sweep_axis_from_name(const std::string& name);

struct ProblemInstance {
  std::unique_ptr<Problem> problem;
  std::vector<double> x1;
};

using ProblemFactory = std::function<ProblemInstance(std::uint64_t d)>;

// Hyperparameters drawn from the closed-form prescription of each inner run's
// own (K, d): L and sigma_s_sq come from the instantiated problem, delta from
// its initial point. lambda_scale multiplies lambda_max (decayed variants).
struct PrescriptionSource {
  Variant variant = Variant::adamw;
  double gamma = 1.0;
  double lambda_scale = 1.0;
};

struct SweepSpec {
  SweepAxis axis = SweepAxis::K;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;
  ProblemFactory factory;
  std::uint64_t base_K = 0;
  std::uint64_t base_d = 0;
  std::uint64_t log_every = 1;
  Variant variant = Variant::adamw;
  std::optional<HyperParams> explicit_hp;
  std::optional<PrescriptionSource> prescribe;
  int jobs = 1;

  void validate() const;
};

struct SweepRun {
  std::size_t value_index = 0;
  double value = 0.0;
  std::uint64_t seed = 0;
  Trajectory trajectory;
};

struct SweepAggregate {
  double value = 0.0;
  std::size_t runs = 0;
  std::size_t diverged = 0;
  double mean_grad_l1_mean = 0.0;
  double mean_grad_l1_stderr = 0.0;
};

// Runs preserve the given value order; aggregates pair each value with the
// mean and standard error of mean_grad_l1 across its non-diverged seeds.
struct SweepResult {
  SweepAxis axis = SweepAxis::K;
  std::vector<SweepRun> runs;
  std::vector<SweepAggregate> aggregates;
};

SweepResult sweep(const SweepSpec& spec);

double mean_of(std::span<const double> xs);

// Standard error of the mean with the unbiased sample variance; 0 for n < 2.
double stderr_of(std::span<const double> xs);

}  // namespace nadamw
