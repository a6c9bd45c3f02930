#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nadamw/optim.hpp"

namespace nadamw {

// Which convergence guarantee the prescription targets. The decayed variants
// (adamw, nadamw) carry a weight-decay budget and an initial-point bound; the
// undecayed variants (adam, nadam) fix lambda = 0 and relax beta to [0, 1].
enum class Variant { adamw, nadamw, adam, nadam };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);
bool variant_has_decay(Variant v);
bool variant_has_lookahead(Variant v);

// Problem-level constants the closed-form prescriptions consume.
//   K        total number of steps
//   d        dimension
//   L        smoothness constant
//   delta    f(x1) - f*
//   sigma_s_sq  total gradient-noise variance, sum_i sigma_i^2
//   gamma    noise-floor knob in (0, 1]
struct PrescriptionInputs {
  std::uint64_t K = 0;
  std::uint64_t d = 0;
  double L = 0.0;
  double delta = 0.0;
  double sigma_s_sq = 0.0;
  double gamma = 1.0;

  void validate() const;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double t) const { return lo <= t && t <= hi; }
};

// Closed-form hyperparameters plus the internal quantities they are built
// from. lambda_max and x1_inf_max cap the weight decay and the initial point;
// for the undecayed variants lambda is pinned to 0 and x1 is unconstrained
// (lambda_max = 0, x1_inf_max = +inf).
struct PrescribedParams {
  Variant variant = Variant::adamw;
  double sigma_hat_sq = 0.0;
  double theta = 0.0;
  Interval beta_range;
  Interval tau_range;
  double beta_canonical = 0.0;
  double eta = 0.0;
  double eps = 0.0;
  double nu = 0.0;
  double lambda_max = 0.0;
  double x1_inf_max = 0.0;
  bool small_noise_regime = false;

  // beta = sqrt(theta), tau = 1, lambda at its cap (0 for undecayed variants).
  HyperParams canonical_hp() const;
};

PrescribedParams prescribe(const PrescriptionInputs& inputs, Variant variant);

// Right-hand sides of the guaranteed mean-l1-gradient bounds. The general and
// small-noise forms apply to the decayed variants, the corollary forms to the
// undecayed ones; applicable() picks the one matching the stored variant and
// the noise regime.
struct BoundValues {
  Variant variant = Variant::adamw;
  bool small_noise_regime = false;
  double rhs_general = 0.0;
  double rhs_small_noise = 0.0;
  double rhs_corollary = 0.0;
  double rhs_corollary_small_noise = 0.0;

  double applicable() const;
};

BoundValues bound_rhs(const PrescriptionInputs& inputs, Variant variant);

// One row per proof-side requirement on (eta, theta, eps, lambda, x1). A row
// passes when lhs <= rhs up to 1e-9 relative slack; the slack absorbs rounding
// on the three requirements the prescription meets with exact equality.
struct ConstraintEntry {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
  bool skipped = false;
};

struct ConstraintReport {
  std::vector<ConstraintEntry> entries;
  bool overall_pass = false;
};

// Checks the seven requirements the convergence proof places on the
// hyperparameters and the initial point. lambda = 0 skips the two rows that
// divide by lambda or scale it.
ConstraintReport validate_prescription(const PrescribedParams& p, const HyperParams& hp,
                                       std::span<const double> x1,
                                       const PrescriptionInputs& inputs);

}  // namespace nadamw
