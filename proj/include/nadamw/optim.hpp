#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace nadamw {

// One step of the double-momentum decoupled-weight-decay update:
//   m' = theta*m + (1-theta)*g
//   v' = beta*v  + (1-beta)*g.^2
//   mt = tau*m' + (1-tau)*g
//   x' = (1 - lambda*eta)*x - eta * mt ./ sqrt(v' + eps)
// No bias correction; eps sits inside the square root. tau = 1 is plain
// decoupled weight decay; lambda = 0 drops the decay entirely.
struct HyperParams {
  double eta = 0.0;
  double theta = 0.0;
  double beta = 0.0;
  double tau = 1.0;
  double lambda = 0.0;
  double eps = 0.0;

  void validate() const;  // throws std::invalid_argument
};

struct OptimizerState {
  std::vector<double> x;
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t k = 0;  // completed steps

  std::size_t dim() const { return x.size(); }
};

struct StepRecord {
  std::vector<double> m_tilde;
  std::vector<double> update;           // x' - x, coordinate-wise
  std::optional<double> ratio_max;      // max_i mt_i^2 / v'_i over v'_i > 0
};

OptimizerState init_state(std::size_t d, std::vector<double> x1);

// In-place kernel; rec (optional) is reused across calls without reallocation.
void nadamw_step_inplace(OptimizerState& s, const HyperParams& hp,
                         std::span<const double> g, StepRecord* rec = nullptr);

struct StepResult {
  OptimizerState state;
  StepRecord record;
};

StepResult nadamw_step(const OptimizerState& s, const HyperParams& hp,
                       std::span<const double> g);

// The tau = 1 member of the family; bit-identical to nadamw_step at tau = 1.
StepResult adamw_step(const OptimizerState& s, const HyperParams& hp,
                      std::span<const double> g);

}  // namespace nadamw
