#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nadamw/rng.hpp"

namespace nadamw {

// Analytic facts about an objective. sigma describes the stochastic-gradient
// oracle: per-coordinate noise standard deviations, valid at every x unless
// sigma_state_dependent is set (then the per-point values come from
// noise_var_at and these fields hold zeros).
struct ProblemConstants {
  double L = 0.0;
  double f_star = 0.0;
  std::vector<double> sigma;
  double sigma_s_sq = 0.0;
  double sigma_l1 = 0.0;
  bool sigma_state_dependent = false;
};

// Stateful minibatch source for one run. Problems hand these out so shared
// Problem objects stay immutable while each run owns its sampling state.
class GradSampler {
 public:
  virtual ~GradSampler() = default;
  virtual void sample(std::span<const double> x, Rng& rng, std::span<double> out) = 0;
};

// Synthetic objective with exact loss/gradient and a seeded unbiased
// stochastic-gradient oracle.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::size_t dim() const = 0;
  virtual const char* kind_name() const = 0;

  virtual double full_loss(std::span<const double> x) const = 0;
  virtual void full_grad(std::span<const double> x, std::span<double> out) const = 0;

  // One unbiased sample of the gradient at x; advances rng deterministically.
  virtual void stoch_grad(std::span<const double> x, Rng& rng, std::span<double> out) const = 0;

  virtual ProblemConstants constants() const = 0;

  // Exact per-coordinate conditional noise variance of stoch_grad at x.
  virtual void noise_var_at(std::span<const double> x, std::span<double> out) const = 0;

  // Exact E||g - grad f(x)||^2 at x (the sum of noise_var_at).
  double noise_sq_at(std::span<const double> x) const;

  // Sampler used for a training stream. Defaults to i.i.d. stoch_grad calls.
  virtual std::unique_ptr<GradSampler> make_sampler() const;

  std::vector<double> full_grad(std::span<const double> x) const;
  std::vector<double> stoch_grad(std::span<const double> x, Rng& rng) const;
};

// One-dimensional quadratic f(x) = (x - x_star)^2 / 200 with a two-branch
// stochastic gradient: value (x - x_star - 1) with probability p, value
// -(x - x_star - 10/9)/10 otherwise. Unbiased exactly at p = 0.1. Its noise
// variance depends on x, so constants() flags sigma as state-dependent.
struct Toy1DParams {
  double x_star = 5.0;
  double p = 0.1;
};

// f(x) = sum_i c_i (x_i - x_star_i)^2 / 2, gradient noise xi_i ~ N(0, sigma_i^2).
struct NoisyQuadraticParams {
  std::vector<double> curvatures;
  std::vector<double> x_star;
  std::vector<double> sigma;
};

// f(x) = (1/n) sum_j sum_i c_i (x_i - b_{j,i})^2 / 2. stoch_grad averages
// `batch` i.i.d. uniformly drawn samples; make_sampler() instead walks a fresh
// seeded shuffle each epoch (any tail shorter than the batch is dropped).
struct FiniteSumQuadraticParams {
  std::vector<double> curvatures;
  std::vector<std::vector<double>> shifts;
  std::size_t batch = 1;
};

std::unique_ptr<Problem> make_toy1d(const Toy1DParams& params);
std::unique_ptr<Problem> make_noisy_quadratic(NoisyQuadraticParams params);
std::unique_ptr<Problem> make_finite_sum_quadratic(FiniteSumQuadraticParams params);

}  // namespace nadamw
