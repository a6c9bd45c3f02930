#include "nadamw/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include "nadamw/io.hpp"
#include "nadamw/rng.hpp"

namespace nadamw {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string::size_type start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(trim(s.substr(start)));
      return parts;
    }
    parts.push_back(trim(s.substr(start, pos - start)));
    start = pos + 1;
  }
}

double parse_double(const std::string& where, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw ConfigError(where + ": empty number");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE)
    throw ConfigError(where + ": cannot parse '" + t + "' as a number");
  return v;
}

std::uint64_t parse_u64(const std::string& where, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty() || t[0] == '-') throw ConfigError(where + ": expected a nonnegative integer");
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size() || errno == ERANGE)
    throw ConfigError(where + ": cannot parse '" + t + "' as an integer");
  return static_cast<std::uint64_t>(v);
}

bool parse_bool(const std::string& where, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true") return true;
  if (t == "false") return false;
  throw ConfigError(where + ": expected true or false, got '" + t + "'");
}

std::vector<double> parse_double_list(const std::string& where, const std::string& text) {
  std::vector<double> out;
  for (const auto& part : split(text, ',')) out.push_back(parse_double(where, part));
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& where, const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& part : split(text, ',')) out.push_back(parse_u64(where, part));
  return out;
}

// A consumed key with enough location context for any later parse error.
struct Field {
  std::string value;
  std::string where;  // "[section] key (line N)"
};

// Section contents with consumption tracking, so every unconsumed key can be
// reported as unknown for the configured kind/mode.
class Sections {
 public:
  void add(const std::string& section, const std::string& key, const std::string& value,
           std::size_t line) {
    auto [it, inserted] = data_[section].emplace(key, Item{value, line});
    (void)it;
    if (!inserted)
      throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "' in [" +
                        section + "]");
  }

  bool has_section(const std::string& section) const { return data_.count(section) > 0; }

  std::optional<Field> take(const std::string& section, const std::string& key) {
    auto sit = data_.find(section);
    if (sit == data_.end()) return std::nullopt;
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) return std::nullopt;
    Field field{kit->second.value, "[" + section + "] " + key + " (line " +
                                       std::to_string(kit->second.line) + ")"};
    sit->second.erase(kit);
    return field;
  }

  Field require(const std::string& section, const std::string& key) {
    auto v = take(section, key);
    if (!v) throw ConfigError("[" + section + "]: missing required key '" + key + "'");
    return *v;
  }

  void finish() const {
    for (const auto& [section, keys] : data_)
      if (!keys.empty())
        throw ConfigError("line " + std::to_string(keys.begin()->second.line) +
                          ": unknown key '" + keys.begin()->first + "' in [" + section + "]");
  }

 private:
  struct Item {
    std::string value;
    std::size_t line = 0;
  };
  std::map<std::string, std::map<std::string, Item>> data_;
};

const std::set<std::string> kKnownSections = {"problem", "optimizer", "run", "sweep", "output"};

Sections tokenize(const std::string& text) {
  Sections sections;
  std::istringstream in(text);
  std::string raw;
  std::string current;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    line_no += 1;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      current = trim(line.substr(1, line.size() - 2));
      if (!kKnownSections.count(current))
        throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" + current +
                          "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    if (current.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    sections.add(current, key, value, line_no);
  }
  return sections;
}

ProblemSpec parse_problem(Sections& s) {
  ProblemSpec spec;
  spec.kind = s.require("problem", "kind").value;
  if (spec.kind == "toy1d") {
    spec.d = 1;
    if (auto v = s.take("problem", "d"); v && parse_u64(v->where, v->value) != 1)
      throw ConfigError("[problem]: toy1d is one-dimensional, d must be 1");
    if (auto v = s.take("problem", "x_star")) spec.x_star = {parse_double(v->where, v->value)};
    if (auto v = s.take("problem", "p")) spec.p = parse_double(v->where, v->value);
    if (auto v = s.take("problem", "x1"))
      spec.x1 = {parse_double(v->where, v->value)};
    else
      spec.x1 = {spec.x_star[0] + 1.0};
  } else if (spec.kind == "noisy_quadratic" || spec.kind == "finite_sum_quadratic") {
    const Field d = s.require("problem", "d");
    spec.d = parse_u64(d.where, d.value);
    if (spec.d < 1) throw ConfigError("[problem]: d must be >= 1");
    if (auto v = s.take("problem", "curvature"))
      spec.curvature = parse_double_list(v->where, v->value);
    const Field x1 = s.require("problem", "x1");
    spec.x1 = parse_double_list(x1.where, x1.value);
    if (spec.kind == "noisy_quadratic") {
      spec.x_star = {0.0};
      if (auto v = s.take("problem", "x_star"))
        spec.x_star = parse_double_list(v->where, v->value);
      if (auto v = s.take("problem", "sigma"))
        spec.sigma = parse_double_list(v->where, v->value);
    } else {
      const Field n = s.require("problem", "n");
      spec.n = parse_u64(n.where, n.value);
      if (auto v = s.take("problem", "batch")) spec.batch = parse_u64(v->where, v->value);
      if (auto v = s.take("problem", "shift_scale"))
        spec.shift_scale = parse_double(v->where, v->value);
      if (auto v = s.take("problem", "shift_seed"))
        spec.shift_seed = parse_u64(v->where, v->value);
    }
  } else {
    throw ConfigError("[problem]: unknown kind '" + spec.kind +
                      "' (expected toy1d, noisy_quadratic, or finite_sum_quadratic)");
  }
  return spec;
}

Variant prescribe_token_to_variant(const std::string& token) {
  if (token == "theorem1") return Variant::adamw;
  if (token == "theorem2") return Variant::nadamw;
  if (token == "corollary1") return Variant::adam;
  if (token == "corollary2") return Variant::nadam;
  throw ConfigError("[optimizer]: unknown prescribe token '" + token +
                    "' (expected theorem1, theorem2, corollary1, or corollary2)");
}

OptimizerSpec parse_optimizer(Sections& s) {
  OptimizerSpec spec;
  const auto prescribe_tok = s.take("optimizer", "prescribe");
  const auto variant_tok = s.take("optimizer", "variant");
  if (prescribe_tok) {
    spec.prescribed = true;
    spec.prescribe_token = prescribe_tok->value;
    spec.prescribe_variant = prescribe_token_to_variant(spec.prescribe_token);
    spec.variant = spec.prescribe_variant;
    if (auto v = s.take("optimizer", "gamma")) spec.gamma = parse_double(v->where, v->value);
    if (auto v = s.take("optimizer", "lambda_scale"))
      spec.lambda_scale = parse_double(v->where, v->value);
    if (auto v = s.take("optimizer", "lambda"))
      spec.lambda_override = parse_double(v->where, v->value);
    for (const char* key : {"eta", "theta", "beta", "tau", "eps"})
      if (s.take("optimizer", key))
        throw ConfigError(std::string("[optimizer]: key '") + key +
                          "' cannot be combined with prescribe (exactly one of explicit "
                          "hyperparameters or prescribe)");
  } else {
    const Field eta = s.require("optimizer", "eta");
    const Field theta = s.require("optimizer", "theta");
    const Field beta = s.require("optimizer", "beta");
    const Field eps = s.require("optimizer", "eps");
    spec.hp.eta = parse_double(eta.where, eta.value);
    spec.hp.theta = parse_double(theta.where, theta.value);
    spec.hp.beta = parse_double(beta.where, beta.value);
    spec.hp.eps = parse_double(eps.where, eps.value);
    if (auto v = s.take("optimizer", "tau")) spec.hp.tau = parse_double(v->where, v->value);
    if (auto v = s.take("optimizer", "lambda"))
      spec.hp.lambda = parse_double(v->where, v->value);
    for (const char* key : {"gamma", "lambda_scale"})
      if (s.take("optimizer", key))
        throw ConfigError(std::string("[optimizer]: key '") + key +
                          "' only applies in prescribe mode");
  }
  if (variant_tok) {
    try {
      spec.variant = variant_from_name(variant_tok->value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(variant_tok->where + ": " + e.what());
    }
    if (spec.prescribed && spec.variant != spec.prescribe_variant)
      throw ConfigError("[optimizer]: variant '" + variant_tok->value +
                        "' contradicts prescribe = " + spec.prescribe_token);
  } else if (!spec.prescribed) {
    throw ConfigError("[optimizer]: missing required key 'variant'");
  }
  return spec;
}

RunSpec parse_run(Sections& s) {
  RunSpec spec;
  const Field k = s.require("run", "K");
  spec.K = parse_u64(k.where, k.value);
  if (spec.K < 1) throw ConfigError("[run]: K must be >= 1");
  if (auto v = s.take("run", "seeds")) {
    spec.seeds = parse_u64_list(v->where, v->value);
    if (spec.seeds.empty()) throw ConfigError("[run]: seeds must be nonempty");
  }
  if (auto v = s.take("run", "log_every")) {
    spec.log_every = parse_u64(v->where, v->value);
    if (spec.log_every < 1 || spec.log_every > spec.K)
      throw ConfigError("[run]: log_every must lie in [1, K]");
  } else {
    spec.log_every = std::max<std::uint64_t>(1, spec.K / 100);
  }
  if (auto v = s.take("run", "lemma2_monitor"))
    spec.lemma2_monitor = parse_bool(v->where, v->value);
  return spec;
}

SweepSection parse_sweep(Sections& s) {
  SweepSection spec;
  if (!s.has_section("sweep")) return spec;
  spec.present = true;
  const Field axis = s.require("sweep", "axis");
  try {
    spec.axis = sweep_axis_from_name(axis.value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(axis.where + ": " + e.what());
  }
  const Field values = s.require("sweep", "values");
  spec.values = parse_double_list(values.where, values.value);
  if (spec.values.empty()) throw ConfigError("[sweep]: values must be nonempty");
  return spec;
}

OutputSpec parse_output(Sections& s) {
  OutputSpec spec;
  if (auto v = s.take("output", "dir")) {
    spec.dir = v->value;
    if (spec.dir.empty()) throw ConfigError("[output]: dir must be nonempty");
  }
  if (auto v = s.take("output", "csv")) spec.csv = parse_bool(v->where, v->value);
  if (auto v = s.take("output", "jsonl")) spec.jsonl = parse_bool(v->where, v->value);
  return spec;
}

std::string join_doubles(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0) out += ',';
    out += io::format_double(xs[i]);
  }
  return out;
}

std::string join_u64(const std::vector<std::uint64_t>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(xs[i]);
  }
  return out;
}

std::vector<double> broadcast(const std::string& where, const std::vector<double>& v,
                              std::uint64_t d) {
  if (v.size() == d) return v;
  if (v.size() == 1) return std::vector<double>(d, v[0]);
  throw ConfigError(where + ": expected 1 or " + std::to_string(d) + " values, got " +
                    std::to_string(v.size()));
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  Sections sections = tokenize(text);
  ExperimentConfig cfg;
  cfg.problem = parse_problem(sections);
  cfg.optimizer = parse_optimizer(sections);
  cfg.run = parse_run(sections);
  cfg.sweep = parse_sweep(sections);
  cfg.output = parse_output(sections);
  sections.finish();
  try {
    if (!cfg.optimizer.prescribed) cfg.optimizer.hp.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[optimizer]: ") + e.what());
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  try {
    return parse_config_text(io::read_text_file(path));
  } catch (const std::runtime_error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) throw;
    throw ConfigError(e.what());
  }
}

std::string resolved_config_text(const ExperimentConfig& cfg) {
  std::string out;
  out += "[problem]\n";
  out += "kind = " + cfg.problem.kind + "\n";
  if (cfg.problem.kind == "toy1d") {
    out += "x_star = " + io::format_double(cfg.problem.x_star[0]) + "\n";
    out += "p = " + io::format_double(cfg.problem.p) + "\n";
  } else {
    out += "d = " + std::to_string(cfg.problem.d) + "\n";
    out += "curvature = " + join_doubles(cfg.problem.curvature) + "\n";
    if (cfg.problem.kind == "noisy_quadratic") {
      out += "x_star = " + join_doubles(cfg.problem.x_star) + "\n";
      out += "sigma = " + join_doubles(cfg.problem.sigma) + "\n";
    } else {
      out += "n = " + std::to_string(cfg.problem.n) + "\n";
      out += "batch = " + std::to_string(cfg.problem.batch) + "\n";
      out += "shift_scale = " + io::format_double(cfg.problem.shift_scale) + "\n";
      out += "shift_seed = " + std::to_string(cfg.problem.shift_seed) + "\n";
    }
  }
  out += "x1 = " + join_doubles(cfg.problem.x1) + "\n";
  out += "\n[optimizer]\n";
  out += std::string("variant = ") + variant_name(cfg.optimizer.variant) + "\n";
  if (cfg.optimizer.prescribed) {
    out += "prescribe = " + cfg.optimizer.prescribe_token + "\n";
    out += "gamma = " + io::format_double(cfg.optimizer.gamma) + "\n";
    out += "lambda_scale = " + io::format_double(cfg.optimizer.lambda_scale) + "\n";
    if (cfg.optimizer.lambda_override)
      out += "lambda = " + io::format_double(*cfg.optimizer.lambda_override) + "\n";
  } else {
    out += "eta = " + io::format_double(cfg.optimizer.hp.eta) + "\n";
    out += "theta = " + io::format_double(cfg.optimizer.hp.theta) + "\n";
    out += "beta = " + io::format_double(cfg.optimizer.hp.beta) + "\n";
    out += "tau = " + io::format_double(cfg.optimizer.hp.tau) + "\n";
    out += "lambda = " + io::format_double(cfg.optimizer.hp.lambda) + "\n";
    out += "eps = " + io::format_double(cfg.optimizer.hp.eps) + "\n";
  }
  out += "\n[run]\n";
  out += "K = " + std::to_string(cfg.run.K) + "\n";
  out += "seeds = " + join_u64(cfg.run.seeds) + "\n";
  out += "log_every = " + std::to_string(cfg.run.log_every) + "\n";
  out += std::string("lemma2_monitor = ") + (cfg.run.lemma2_monitor ? "true" : "false") + "\n";
  if (cfg.sweep.present) {
    out += "\n[sweep]\n";
    out += std::string("axis = ") + sweep_axis_name(cfg.sweep.axis) + "\n";
    out += "values = " + join_doubles(cfg.sweep.values) + "\n";
  }
  out += "\n[output]\n";
  out += "dir = " + cfg.output.dir + "\n";
  out += std::string("csv = ") + (cfg.output.csv ? "true" : "false") + "\n";
  out += std::string("jsonl = ") + (cfg.output.jsonl ? "true" : "false") + "\n";
  return out;
}

ProblemInstance build_problem(const ProblemSpec& spec) {
  ProblemInstance instance;
  try {
    if (spec.kind == "toy1d") {
      Toy1DParams params;
      params.x_star = spec.x_star.at(0);
      params.p = spec.p;
      instance.problem = make_toy1d(params);
      instance.x1 = broadcast("[problem] x1", spec.x1, 1);
    } else if (spec.kind == "noisy_quadratic") {
      NoisyQuadraticParams params;
      params.curvatures = broadcast("[problem] curvature", spec.curvature, spec.d);
      params.x_star = broadcast("[problem] x_star", spec.x_star, spec.d);
      params.sigma = broadcast("[problem] sigma", spec.sigma, spec.d);
      instance.problem = make_noisy_quadratic(std::move(params));
      instance.x1 = broadcast("[problem] x1", spec.x1, spec.d);
    } else if (spec.kind == "finite_sum_quadratic") {
      FiniteSumQuadraticParams params;
      params.curvatures = broadcast("[problem] curvature", spec.curvature, spec.d);
      params.batch = spec.batch;
      Rng rng(spec.shift_seed, 0, StreamPurpose::misc);
      params.shifts.resize(spec.n);
      for (auto& row : params.shifts) {
        row.resize(spec.d);
        for (auto& b : row) b = spec.shift_scale * rng.normal();
      }
      instance.problem = make_finite_sum_quadratic(std::move(params));
      instance.x1 = broadcast("[problem] x1", spec.x1, spec.d);
    } else {
      throw ConfigError("[problem]: unknown kind '" + spec.kind + "'");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[problem]: ") + e.what());
  }
  return instance;
}

ProblemInstance build_problem_with_dim(ProblemSpec spec, std::uint64_t d) {
  if (spec.kind == "toy1d") {
    if (d != 1) throw ConfigError("[sweep]: toy1d is one-dimensional, cannot sweep d");
  } else {
    spec.d = d;
  }
  return build_problem(spec);
}

}  // namespace nadamw
