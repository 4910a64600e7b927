#pragma once

#include "diffrep/autonet.hpp"
#include "diffrep/numeric.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace diffrep {

/// Write-temp-then-rename; the destination never holds partial content.
void atomic_write_file(const std::string& path, const std::string& content);

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed = 1469598103934665603ull);
std::string hex64(std::uint64_t value);
/// Order- and content-sensitive hash of every tensor (names, shapes, bytes).
std::uint64_t hash_params(const ParamStore& params);

/// Round-trip exact decimal formatting (%.17g).
std::string format_double(double v);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

std::string render_csv(const CsvTable& table);
void write_csv(const CsvTable& table, const std::string& path);
CsvTable read_csv_table(const std::string& path);

// ---------------------------------------------------------------------------
// SVG charts (byte-stable for identical inputs)
// ---------------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const std::vector<Series>& series);
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

std::string render_bar_chart(const std::string& title, const std::string& y_label,
                             const std::vector<std::string>& labels,
                             const std::vector<double>& values,
                             const std::vector<double>& errors);
void write_bar_chart(const std::string& path, const std::string& title,
                     const std::string& y_label, const std::vector<std::string>& labels,
                     const std::vector<double>& values, const std::vector<double>& errors);

// ---------------------------------------------------------------------------
// Run reports
// ---------------------------------------------------------------------------

struct TimeTrace {
  std::vector<double> mean_t;
  std::vector<double> std_t;
  std::vector<double> mean_reward;
  std::vector<double> entropy;

  std::size_t size() const { return mean_t.size(); }
};

struct SeedRunReport {
  std::uint64_t seed = 0;
  std::vector<double> stage1_loss;  // per epoch
  std::vector<double> stage2_loss;
  double train_accuracy = -1.0;
  double test_accuracy = -1.0;
  TimeTrace trace;
  double final_mean_t = -1.0;
  double final_mean_t_quantile = -1.0;  // position inside [0, T)
  // probe summaries (empty when not probed)
  std::vector<int> probe_t;
  std::vector<double> probe_erank;
  std::vector<double> probe_separability;
  std::vector<double> probe_attention_off_diagonal;
};

struct AblationRow {
  std::string mode;
  std::vector<double> seed_accuracy;
  double mean = 0.0;
  double stddev = 0.0;  // unbiased
};

struct RunReport {
  int schema_version = 1;
  std::string kind;
  nlohmann::json config;
  std::string config_hash;
  std::vector<SeedRunReport> seeds;
  std::vector<AblationRow> ablation;
  double wall_clock_seconds = 0.0;  // excluded from determinism comparisons

  nlohmann::json to_json() const;
  static RunReport from_json(const nlohmann::json& j);
};

/// Writes report.json plus the derived CSV/SVG files into dir. Byte-stable
/// given identical report content.
void emit_report(const RunReport& report, const std::string& dir);

/// report.json serialization with the timing field removed, for comparisons.
std::string report_determinism_key(const RunReport& report);

}  // namespace diffrep
