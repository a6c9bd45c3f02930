#include "nadamw/prescribe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace nadamw {

namespace {

constexpr double kConstraintSlack = 1e-9;

double checked_sqrt(double t) { return std::sqrt(t); }

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::adamw: return "adamw";
    case Variant::nadamw: return "nadamw";
    case Variant::adam: return "adam";
    case Variant::nadam: return "nadam";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "adamw") return Variant::adamw;
  if (name == "nadamw") return Variant::nadamw;
  if (name == "adam") return Variant::adam;
  if (name == "nadam") return Variant::nadam;
  throw std::invalid_argument("unknown variant '" + name +
                              "' (expected adamw, nadamw, adam, or nadam)");
}

bool variant_has_decay(Variant v) { return v == Variant::adamw || v == Variant::nadamw; }

bool variant_has_lookahead(Variant v) { return v == Variant::nadamw || v == Variant::nadam; }

void PrescriptionInputs::validate() const {
  auto fail = [](const std::string& msg) {
    throw std::invalid_argument("PrescriptionInputs: " + msg);
  };
  if (K < 1) fail("K must be >= 1");
  if (d < 1) fail("d must be >= 1");
  if (!(L > 0.0) || !std::isfinite(L)) fail("L must be positive and finite");
  if (!(delta > 0.0) || !std::isfinite(delta)) fail("delta must be positive and finite");
  if (!(sigma_s_sq >= 0.0) || !std::isfinite(sigma_s_sq)) fail("sigma_s_sq must be >= 0 and finite");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
}

HyperParams PrescribedParams::canonical_hp() const {
  HyperParams hp;
  hp.eta = eta;
  hp.theta = theta;
  hp.beta = beta_canonical;
  hp.tau = 1.0;
  hp.lambda = lambda_max;
  hp.eps = eps;
  return hp;
}

PrescribedParams prescribe(const PrescriptionInputs& in, Variant variant) {
  in.validate();
  const double K = static_cast<double>(in.K);
  const double d = static_cast<double>(in.d);
  const double noise_floor = in.L * in.delta / (K * in.gamma * in.gamma);
  const bool small_noise = in.sigma_s_sq <= noise_floor;

  PrescribedParams p;
  p.variant = variant;
  p.small_noise_regime = small_noise;
  p.sigma_hat_sq = std::max(in.sigma_s_sq, noise_floor);
  p.theta = small_noise ? 1.0 - in.gamma
                        : 1.0 - checked_sqrt(in.L * in.delta / (K * p.sigma_hat_sq));
  if (!(p.theta >= 0.0 && p.theta < 1.0))
    throw std::runtime_error("prescribe: theta fell outside [0, 1); inputs are inconsistent");

  p.beta_canonical = checked_sqrt(p.theta);
  p.beta_range = variant_has_decay(variant) ? Interval{p.theta, p.beta_canonical}
                                            : Interval{0.0, 1.0};
  p.tau_range = variant_has_lookahead(variant) ? Interval{p.theta, 1.0} : Interval{1.0, 1.0};
  p.eta = checked_sqrt(in.delta / (4.0 * K * d * in.L));
  p.eps = p.sigma_hat_sq / d;
  p.nu = 0.5 * checked_sqrt(in.L * in.delta / p.sigma_hat_sq);
  if (variant_has_decay(variant)) {
    p.lambda_max = checked_sqrt(2.0 * d) / (5.0 * std::pow(K, 0.75)) *
                   std::pow(in.L * in.L * in.L / (p.sigma_hat_sq * in.delta), 0.25);
    p.x1_inf_max = 0.625 * checked_sqrt(K * in.delta / (d * in.L));
  } else {
    p.lambda_max = 0.0;
    p.x1_inf_max = std::numeric_limits<double>::infinity();
  }
  return p;
}

double BoundValues::applicable() const {
  if (variant_has_decay(variant)) return small_noise_regime ? rhs_small_noise : rhs_general;
  return small_noise_regime ? rhs_corollary_small_noise : rhs_corollary;
}

BoundValues bound_rhs(const PrescriptionInputs& in, Variant variant) {
  in.validate();
  const double K = static_cast<double>(in.K);
  const double d = static_cast<double>(in.d);
  const double noise_floor = in.L * in.delta / (K * in.gamma * in.gamma);
  const double sigma_hat_sq = std::max(in.sigma_s_sq, noise_floor);
  const double ld = in.L * in.delta;

  BoundValues b;
  b.variant = variant;
  b.small_noise_regime = in.sigma_s_sq <= noise_floor;
  const double first = checked_sqrt(d) * std::pow(sigma_hat_sq * ld, 0.25) / std::pow(K, 0.25);
  const double second = checked_sqrt(d * ld / K);
  b.rhs_general = 9.0 * first + 51.0 * second;
  b.rhs_corollary = 6.0 * first + 23.0 * second;
  const double small = checked_sqrt(d * ld / (K * in.gamma));
  b.rhs_small_noise = 60.0 * small;
  b.rhs_corollary_small_noise = 29.0 * small;
  return b;
}

ConstraintReport validate_prescription(const PrescribedParams& p, const HyperParams& hp,
                                       std::span<const double> x1,
                                       const PrescriptionInputs& in) {
  in.validate();
  const double K = static_cast<double>(in.K);
  const double d = static_cast<double>(in.d);
  const double quarter_root_K = std::pow(K, 0.25);
  const double sqrt_nu = checked_sqrt(p.nu);
  double x1_inf = 0.0;
  for (double xi : x1) x1_inf = std::max(x1_inf, std::abs(xi));

  ConstraintReport report;
  auto add = [&report](std::string name, double lhs, double rhs, bool skipped = false) {
    ConstraintEntry e;
    e.name = std::move(name);
    e.lhs = lhs;
    e.rhs = rhs;
    e.skipped = skipped;
    e.pass = skipped || lhs <= rhs * (1.0 + kConstraintSlack);
    report.entries.push_back(std::move(e));
  };

  const bool no_decay = hp.lambda == 0.0;
  add("eta <= sqrt(eps)/(2L)", hp.eta, checked_sqrt(hp.eps) / (2.0 * in.L));
  add("eta^2 <= eps*(1-theta)^2/(4L^2)", hp.eta * hp.eta,
      hp.eps * (1.0 - hp.theta) * (1.0 - hp.theta) / (4.0 * in.L * in.L));
  add("eta*lambda <= sqrt(nu)/(5*K^{5/4})", hp.eta * hp.lambda,
      sqrt_nu / (5.0 * K * quarter_root_K), no_decay);
  {
    ConstraintEntry e;
    e.name = "sqrt(nu)/K^{1/4} < 1";
    e.lhs = sqrt_nu / quarter_root_K;
    e.rhs = 1.0;
    e.pass = e.lhs < 1.0;
    report.entries.push_back(std::move(e));
  }
  add("x1_inf <= sqrt(nu)/(4*K^{1/4}*lambda)", x1_inf,
      no_decay ? std::numeric_limits<double>::infinity()
               : sqrt_nu / (4.0 * quarter_root_K * hp.lambda),
      no_decay);
  add("nu/sqrt(K) <= 1/8", p.nu / checked_sqrt(K), 0.125);
  add("eps >= sigma_s_sq/d", in.sigma_s_sq / d, hp.eps);

  report.overall_pass = true;
  for (const auto& e : report.entries)
    if (!e.skipped && !e.pass) report.overall_pass = false;
  return report;
}

}  // namespace nadamw
