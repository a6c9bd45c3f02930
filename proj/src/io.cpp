#include "nadamw/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace nadamw::io {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json json_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

void append_summary_fields(ordered_json& row, const Trajectory& t) {
  const TrajectorySummary& s = t.summary;
  row["mean_grad_l1"] = s.mean_grad_l1;
  row["bound_rhs"] = s.bound_rhs ? ordered_json(*s.bound_rhs) : ordered_json(nullptr);
  row["bound_satisfied"] = s.bound_satisfied ? ordered_json(*s.bound_satisfied) : ordered_json(nullptr);
  row["x_inf_always_below_1_over_lambda"] = s.x_inf_always_below_1_over_lambda;
  row["max_lambda_x_inf"] = s.max_lambda_x_inf;
  row["noise_sq_sup"] = s.noise_sq_sup_observed;
  row["diverged"] = s.diverged;
  row["steps_completed"] = s.steps_completed;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

void write_text_file(const std::string& path, std::string_view content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string trajectory_csv(const Trajectory& t) {
  std::string out = "k,loss,grad_l1,grad_l2,ratio,x_inf,lambda_x_inf,kkt,noise_sq,ratio_max_lemma2\n";
  for (const MetricsRow& r : t.rows) {
    out += std::to_string(r.k);
    out += ',';
    out += format_double(r.loss);
    out += ',';
    out += format_double(r.grad_l1);
    out += ',';
    out += format_double(r.grad_l2);
    out += ',';
    if (r.ratio) out += format_double(*r.ratio);
    out += ',';
    out += format_double(r.x_inf);
    out += ',';
    out += format_double(r.lambda_x_inf);
    out += ',';
    out += format_double(r.kkt);
    out += ',';
    if (r.noise_sq) out += format_double(*r.noise_sq);
    out += ',';
    if (r.ratio_max_lemma2) out += format_double(*r.ratio_max_lemma2);
    out += '\n';
  }
  return out;
}

std::string run_summary_jsonl_line(std::string_view config_hash, const Trajectory& t) {
  ordered_json row;
  row["config"] = std::string(config_hash);
  row["seed"] = t.seed;
  append_summary_fields(row, t);
  return row.dump() + "\n";
}

std::string sweep_jsonl(std::string_view config_hash, const SweepResult& r) {
  std::string out;
  for (const SweepRun& run : r.runs) {
    ordered_json row;
    row["config"] = std::string(config_hash);
    row["axis"] = sweep_axis_name(r.axis);
    row["value"] = run.value;
    row["seed"] = run.seed;
    append_summary_fields(row, run.trajectory);
    out += row.dump();
    out += '\n';
  }
  return out;
}

std::string sweep_aggregates_csv(const SweepResult& r) {
  std::string out = "value,runs,diverged,mean_grad_l1,stderr\n";
  for (const SweepAggregate& a : r.aggregates) {
    out += format_double(a.value);
    out += ',';
    out += std::to_string(a.runs);
    out += ',';
    out += std::to_string(a.diverged);
    out += ',';
    out += format_double(a.mean_grad_l1_mean);
    out += ',';
    out += format_double(a.mean_grad_l1_stderr);
    out += '\n';
  }
  return out;
}

std::string lemma_report_jsonl_line(const LemmaReport& r) {
  ordered_json row;
  row["lemma"] = r.lemma;
  row["trials"] = r.trials;
  row["violations"] = r.violations;
  row["worst_margin"] = json_or_null(r.worst_margin);
  row["pass"] = r.pass;
  row["details"] = r.details;
  return row.dump() + "\n";
}

std::string gaussian_report_jsonl_line(const GaussianRatioReport& r) {
  ordered_json row;
  row["lemma"] = "gaussian_ratio";
  row["d"] = r.d;
  row["N"] = r.N;
  row["ratio"] = r.ratio;
  row["bound"] = r.bound;
  row["oracle_ratio"] = r.oracle_ratio;
  row["mean_l1"] = r.mean_l1;
  row["mean_l1_stderr"] = r.mean_l1_stderr;
  row["oracle_mean_l1"] = r.oracle_mean_l1;
  row["mean_l2"] = r.mean_l2;
  row["mean_l2_stderr"] = r.mean_l2_stderr;
  row["oracle_mean_l2"] = r.oracle_mean_l2;
  row["pass"] = r.pass;
  return row.dump() + "\n";
}

std::string prescription_json(const PrescribedParams& p, const BoundValues& b,
                              const ConstraintReport& c) {
  ordered_json root;
  root["variant"] = variant_name(p.variant);
  root["small_noise_regime"] = p.small_noise_regime;
  root["sigma_hat_sq"] = p.sigma_hat_sq;
  root["theta"] = p.theta;
  root["beta_range"] = {p.beta_range.lo, p.beta_range.hi};
  root["beta_canonical"] = p.beta_canonical;
  root["tau_range"] = {p.tau_range.lo, p.tau_range.hi};
  root["eta"] = p.eta;
  root["eps"] = p.eps;
  root["nu"] = p.nu;
  root["lambda_max"] = json_or_null(p.lambda_max);
  root["x1_inf_max"] = json_or_null(p.x1_inf_max);
  ordered_json bounds;
  bounds["rhs_general"] = b.rhs_general;
  bounds["rhs_small_noise"] = b.rhs_small_noise;
  bounds["rhs_corollary"] = b.rhs_corollary;
  bounds["rhs_corollary_small_noise"] = b.rhs_corollary_small_noise;
  bounds["applicable"] = b.applicable();
  root["bounds"] = bounds;
  ordered_json rows = ordered_json::array();
  for (const ConstraintEntry& e : c.entries) {
    ordered_json row;
    row["name"] = e.name;
    row["lhs"] = json_or_null(e.lhs);
    row["rhs"] = json_or_null(e.rhs);
    row["pass"] = e.pass;
    row["skipped"] = e.skipped;
    rows.push_back(row);
  }
  root["constraints"] = rows;
  root["overall_pass"] = c.overall_pass;
  return root.dump(2) + "\n";
}

std::string prescription_table(const PrescribedParams& p, const BoundValues& b,
                               const ConstraintReport& c) {
  std::string out;
  auto line = [&out](const std::string& key, const std::string& value) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-26s %s\n", key.c_str(), value.c_str());
    out += buf;
  };
  auto interval = [](const Interval& i) {
    return "[" + format_double(i.lo) + ", " + format_double(i.hi) + "]";
  };
  line("variant", variant_name(p.variant));
  line("regime", p.small_noise_regime ? "small-noise" : "noise-dominated");
  line("sigma_hat_sq", format_double(p.sigma_hat_sq));
  line("theta", format_double(p.theta));
  line("beta range", interval(p.beta_range));
  line("beta canonical", format_double(p.beta_canonical));
  line("tau range", interval(p.tau_range));
  line("eta", format_double(p.eta));
  line("eps", format_double(p.eps));
  line("nu", format_double(p.nu));
  line("lambda_max", format_double(p.lambda_max));
  line("x1_inf_max",
       std::isfinite(p.x1_inf_max) ? format_double(p.x1_inf_max) : std::string("unconstrained"));
  line("rhs general", format_double(b.rhs_general));
  line("rhs small-noise", format_double(b.rhs_small_noise));
  line("rhs corollary", format_double(b.rhs_corollary));
  line("rhs corollary small", format_double(b.rhs_corollary_small_noise));
  line("rhs applicable", format_double(b.applicable()));
  out += "constraints:\n";
  for (const ConstraintEntry& e : c.entries) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "  %-4s %-42s lhs=%s rhs=%s\n",
                  e.skipped ? "SKIP" : (e.pass ? "PASS" : "FAIL"), e.name.c_str(),
                  format_double(e.lhs).c_str(), format_double(e.rhs).c_str());
    out += buf;
  }
  out += std::string("overall: ") + (c.overall_pass ? "PASS" : "FAIL") + "\n";
  return out;
}

std::string two_column_plot_data(std::span<const std::pair<std::uint64_t, double>> points) {
  std::string out;
  for (const auto& [k, v] : points) {
    out += std::to_string(k);
    out += ' ';
    out += format_double(v);
    out += '\n';
  }
  return out;
}

std::string toy_plot_script(std::span<const std::string> data_files,
                            std::span<const double> lambdas) {
  if (data_files.size() != lambdas.size())
    throw std::invalid_argument("toy_plot_script: one data file per lambda");
  std::string out =
      "#!/usr/bin/env python3\n"
      "import os\n"
      "import matplotlib\n"
      "matplotlib.use(\"Agg\")\n"
      "import matplotlib.pyplot as plt\n"
      "import numpy as np\n"
      "\n"
      "here = os.path.dirname(os.path.abspath(__file__))\n"
      "series = [\n";
  for (std::size_t i = 0; i < data_files.size(); ++i) {
    out += "    (\"" + data_files[i] + "\", \"" + format_double(lambdas[i]) + "\"),\n";
  }
  out +=
      "]\n"
      "fig, ax = plt.subplots(figsize=(6, 4))\n"
      "for fname, lam in series:\n"
      "    data = np.loadtxt(os.path.join(here, fname))\n"
      "    ax.loglog(data[:, 0], data[:, 1], label=f\"lambda={lam}\")\n"
      "ax.set_xlabel(\"step k\")\n"
      "ax.set_ylabel(\"running average |grad f|\")\n"
      "ax.legend()\n"
      "fig.tight_layout()\n"
      "fig.savefig(os.path.join(here, \"toy_plateau.png\"), dpi=150)\n"
      "print(\"wrote\", os.path.join(here, \"toy_plateau.png\"))\n";
  return out;
}

}  // namespace nadamw::io
