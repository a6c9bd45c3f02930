#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nadamw/harness.hpp"
#include "nadamw/optim.hpp"
#include "nadamw/prescribe.hpp"

namespace nadamw {

// Raised for any malformed, missing, unknown, or contradictory config input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-coordinate vectors may be given as a single value, broadcast to d.
struct ProblemSpec {
  std::string kind;
  std::uint64_t d = 1;
  double p = 0.1;
  std::vector<double> curvature{1.0};
  std::vector<double> x_star{5.0};
  std::vector<double> sigma{0.0};
  std::uint64_t n = 0;
  std::uint64_t batch = 1;
  double shift_scale = 1.0;
  std::uint64_t shift_seed = 0;
  std::vector<double> x1;
};

// Exactly one of the explicit hyperparameters or a prescribe token is
// configured. In prescribe mode, lambda_override (if set) replaces the
// canonical lambda after scaling.
struct OptimizerSpec {
  Variant variant = Variant::adamw;
  bool prescribed = false;
  HyperParams hp;
  Variant prescribe_variant = Variant::adamw;
  std::string prescribe_token;
  double gamma = 1.0;
  double lambda_scale = 1.0;
  std::optional<double> lambda_override;
};

struct RunSpec {
  std::uint64_t K = 0;
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t log_every = 0;
  bool lemma2_monitor = false;
};

struct SweepSection {
  bool present = false;
  SweepAxis axis = SweepAxis::K;
  std::vector<double> values;
};

struct OutputSpec {
  std::string dir = "out";
  bool csv = true;
  bool jsonl = true;
};

struct ExperimentConfig {
  ProblemSpec problem;
  OptimizerSpec optimizer;
  RunSpec run;
  SweepSection sweep;
  OutputSpec output;
};

// Strict INI-style parser: [section] headers, key = value lines, '#' comments.
// Unknown sections, unknown keys, duplicate keys, and malformed values are
// all errors; defaults are materialized (log_every, toy x1), so the result
// round-trips byte-identically through resolved_config_text.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Canonical serialization: fixed section and key order, every effective value
// explicit. parse_config_text(resolved_config_text(c)) reproduces c.
std::string resolved_config_text(const ExperimentConfig& cfg);

ProblemInstance build_problem(const ProblemSpec& spec);

// Same, with the dimension replaced (d-sweeps). Scalar per-coordinate entries
// broadcast to the new d; explicit lists of another length are rejected.
ProblemInstance build_problem_with_dim(ProblemSpec spec, std::uint64_t d);

}  // namespace nadamw
