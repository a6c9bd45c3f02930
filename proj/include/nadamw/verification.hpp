#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nadamw/harness.hpp"
#include "nadamw/optim.hpp"
#include "nadamw/problems.hpp"
#include "nadamw/rng.hpp"

namespace nadamw {

// Outcome of one audit. worst_margin is the most adverse LHS minus RHS seen,
// where RHS already includes the audit's statistical allowance, so a positive
// value always corresponds to a counted violation.
struct LemmaReport {
  std::string lemma;
  std::uint64_t trials = 0;
  std::uint64_t violations = 0;
  double worst_margin = 0.0;
  bool pass = false;
  std::vector<std::string> details;
};

// Per-step watcher for the two deterministic second-moment facts: the ratio
// m_tilde_i^2 / v_i stays <= 8, and with decay ||x^{k+1}||_inf - 3/lambda is
// dominated by (1-eta*lambda)^k (||x^1||_inf - 3/lambda). Construction refuses
// hyperparameters outside theta <= tau <= 1, theta <= beta <= sqrt(theta) < 1,
// where the facts do not hold in general. Checks carry 1e-9 relative slack.
class Lemma2Monitor : public StepObserver {
 public:
  explicit Lemma2Monitor(const HyperParams& hp);

  static bool applicable(const HyperParams& hp);

  void on_step(std::uint64_t k, std::span<const double> x_before, const OptimizerState& after,
               const StepRecord& rec, std::span<const double> g,
               std::span<const double> full_grad) override;

  LemmaReport report() const;

 private:
  HyperParams hp_;
  double x1_inf_ = 0.0;
  double decay_pow_ = 1.0;
  bool started_ = false;
  std::uint64_t trials_ = 0;
  std::uint64_t violations_ = 0;
  double worst_margin_ = 0.0;
  std::vector<std::string> details_;
};

struct Lemma2StressSpec {
  std::uint64_t triples = 100;
  std::uint64_t steps_per_triple = 1'000'000;
  std::size_t d = 4;
  std::uint64_t seed = 0;
};

// Hammers the ratio bound with randomized admissible (theta, beta, tau),
// randomized (eta, lambda, eps), and adversarial gradient streams (Gaussian,
// uniform, constant, sign-alternating, spiky). One trial per step.
LemmaReport run_lemma2_stress(const Lemma2StressSpec& spec);

// Snapshot taken after step k completed: x_prev/m_prev/v_prev/m_tilde_prev
// belong to step k, x_next is the iterate the next step will consume.
struct FrozenStep {
  std::uint64_t k = 0;
  std::vector<double> x_prev;
  std::vector<double> m_prev;
  std::vector<double> v_prev;
  std::vector<double> m_tilde_prev;
  std::vector<double> x_next;
};

class CheckpointCollector : public StepObserver {
 public:
  // capture_steps must be strictly increasing.
  explicit CheckpointCollector(std::vector<std::uint64_t> capture_steps);

  void on_step(std::uint64_t k, std::span<const double> x_before, const OptimizerState& after,
               const StepRecord& rec, std::span<const double> g,
               std::span<const double> full_grad) override;

  const std::vector<FrozenStep>& checkpoints() const { return checkpoints_; }

 private:
  std::vector<std::uint64_t> steps_;
  std::size_t pos_ = 0;
  std::vector<FrozenStep> checkpoints_;
};

// Monte-Carlo check of the momentum-error recursion at one frozen step: draws
// M fresh stochastic gradients at x_next, forms the empirical conditional
// mean of ||m - grad||^2 (and the m_tilde version), and requires each to stay
// below its closed-form bound plus 4 empirical standard errors. The noise
// term uses the exact conditional variance at x_next. Two trials per call.
LemmaReport audit_lemma3(const FrozenStep& fs, const Problem& problem, const HyperParams& hp,
                         std::uint64_t M, Rng& rng);

// Runs cfg once per audit-chosen checkpoint set and applies audit_lemma3 at
// n_checkpoints random steps. One trial per checkpoint; a checkpoint counts
// as violated when either inequality fails. pass requires >= 99% clean.
LemmaReport audit_lemma3_on_trajectory(const RunConfig& cfg, std::uint64_t n_checkpoints,
                                       std::uint64_t M, std::uint64_t audit_seed);

// Accumulates both sides of the second-moment volume bound along one run:
// LHS = sum_k sum_i sqrt(vtilde_i^k + eps) with
// vtilde_i^k = beta v_i^{k-1} + (1-beta)(grad_i(x^k)^2 + sigma_i^2), and
// RHS = K ||sigma||_1 + K d sqrt(eps) + 2 sum_k sum_i grad_i(x^k)^2 / sqrt(vtilde_i^k + eps).
// Needs state-independent sigma.
class Lemma4Accumulator : public StepObserver {
 public:
  Lemma4Accumulator(const Problem& problem, const HyperParams& hp);

  void on_step(std::uint64_t k, std::span<const double> x_before, const OptimizerState& after,
               const StepRecord& rec, std::span<const double> g,
               std::span<const double> full_grad) override;

  double lhs() const { return lhs_; }
  double rhs() const;

 private:
  HyperParams hp_;
  std::vector<double> sigma_sq_;
  double sigma_l1_ = 0.0;
  std::vector<double> prev_v_;
  double lhs_ = 0.0;
  double grad_term_ = 0.0;
  std::uint64_t steps_ = 0;
};

// Replicates cfg over the given seeds (>= 10), averages both accumulated
// sides, and requires mean LHS <= 1.05 * mean RHS + 4 * stderr(LHS - RHS).
LemmaReport audit_lemma4(const RunConfig& cfg, std::span<const std::uint64_t> seeds);

struct GaussianRatioReport {
  std::uint64_t d = 0;
  std::uint64_t N = 0;
  double ratio = 0.0;
  double bound = 0.0;
  bool pass = false;
  double mean_l1 = 0.0;
  double mean_l1_stderr = 0.0;
  double mean_l2 = 0.0;
  double mean_l2_stderr = 0.0;
  double oracle_mean_l1 = 0.0;
  double oracle_mean_l2 = 0.0;
  double oracle_ratio = 0.0;
};

// Draws N standard-normal vectors of length d and compares
// mean ||x||_1 / mean ||x||_2 against sqrt(2d/pi). Closed-form oracles
// (d sqrt(2/pi) and the chi mean via log-gamma) ride along for calibration.
GaussianRatioReport mc_gaussian_ratio(std::uint64_t d, std::uint64_t N, std::uint64_t seed);

// The verify-lemmas default workload: ratio stress, frozen-step recursion
// audit, replicate volume audit, and the Gaussian norm-ratio check.
struct LemmaSuiteResult {
  LemmaReport lemma2;
  LemmaReport lemma3;
  LemmaReport lemma4;
  GaussianRatioReport gaussian;
  bool all_pass = false;
};

LemmaSuiteResult run_default_lemma_suite(std::uint64_t seed);

}  // namespace nadamw
