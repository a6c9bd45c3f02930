#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nadamw/harness.hpp"
#include "nadamw/prescribe.hpp"
#include "nadamw/verification.hpp"

namespace nadamw::io {

// Shortest text that round-trips the exact double (printf %.17g).
std::string format_double(double v);

std::uint64_t fnv1a(std::string_view text);
std::string hash_hex(std::uint64_t h);

// Writes via a temp file and rename so readers never see partial content.
// Creates missing parent directories.
void write_text_file(const std::string& path, std::string_view content);

std::string read_text_file(const std::string& path);

// One run as CSV with the fixed header
// k,loss,grad_l1,grad_l2,ratio,x_inf,lambda_x_inf,kkt,noise_sq,ratio_max_lemma2
// and empty fields for absent optionals.
std::string trajectory_csv(const Trajectory& t);

// JSONL rows. Keys appear in a fixed order, documented in the README.
std::string run_summary_jsonl_line(std::string_view config_hash, const Trajectory& t);
std::string sweep_jsonl(std::string_view config_hash, const SweepResult& r);
std::string sweep_aggregates_csv(const SweepResult& r);
std::string lemma_report_jsonl_line(const LemmaReport& r);
std::string gaussian_report_jsonl_line(const GaussianRatioReport& r);

// Machine-readable prescription + bound values + constraint table.
std::string prescription_json(const PrescribedParams& p, const BoundValues& b,
                              const ConstraintReport& c);

// Human-readable counterpart of prescription_json.
std::string prescription_table(const PrescribedParams& p, const BoundValues& b,
                               const ConstraintReport& c);

std::string two_column_plot_data(std::span<const std::pair<std::uint64_t, double>> points);

// Matplotlib script that plots the emitted two-column files on log-log axes.
std::string toy_plot_script(std::span<const std::string> data_files,
                            std::span<const double> lambdas);

}  // namespace nadamw::io
