#include "diffrep/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace diffrep {

using nlohmann::json;

void atomic_write_file(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) {
    std::filesystem::create_directories(target.parent_path());
  }
  const std::filesystem::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
      throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
  }
  std::filesystem::rename(tmp, target);
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < bytes; ++i) {
    h = (h ^ p[i]) * 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return std::string(buf);
}

std::uint64_t hash_params(const ParamStore& params) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& [name, m] : params) {
    h = fnv1a(name.data(), name.size(), h);
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    h = fnv1a(dims, sizeof(dims), h);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        h = fnv1a(&v, sizeof(v), h);
      }
    }
  }
  return h;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

std::string render_csv(const CsvTable& table) {
  std::ostringstream out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    out << (c > 0 ? "," : "") << table.columns[c];
  }
  out << "\n";
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) {
      throw std::invalid_argument("csv: ragged row");
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c > 0 ? "," : "") << format_double(row[c]);
    }
    out << "\n";
  }
  return out.str();
}

void write_csv(const CsvTable& table, const std::string& path) {
  atomic_write_file(path, render_csv(table));
}

CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open '" + path + "'");
  }
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("empty CSV '" + path + "'");
  }
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) {
    table.columns.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::stringstream ss(line);
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      row.push_back(std::stod(cell));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

namespace {

constexpr double kWidth = 800.0;
constexpr double kHeight = 500.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 780.0;
constexpr double kTop = 50.0;
constexpr double kBottom = 450.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return std::string(buf);
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return std::string(buf);
}

void axes(std::ostringstream& out, const std::string& title, const std::string& x_label,
          const std::string& y_label, double x0, double x1, double y0, double y1) {
  out << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kBottom << "\" x2=\"" << kRight
      << "\" y2=\"" << kBottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kBottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double f = i / 5.0;
    const double px = kLeft + f * (kRight - kLeft);
    const double py = kBottom - f * (kBottom - kTop);
    out << "<line x1=\"" << coord(px) << "\" y1=\"" << kBottom << "\" x2=\"" << coord(px)
        << "\" y2=\"" << kBottom + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << coord(px) << "\" y=\"" << kBottom + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << tick_label(x0 + f * (x1 - x0)) << "</text>\n";
    out << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << coord(py) << "\" x2=\"" << kLeft
        << "\" y2=\"" << coord(py) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << kLeft - 8 << "\" y=\"" << coord(py + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << tick_label(y0 + f * (y1 - y0)) << "</text>\n";
  }
  out << "<text x=\"" << (kLeft + kRight) / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << x_label
      << "</text>\n";
  out << "<text x=\"18\" y=\"" << (kTop + kBottom) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
      << "transform=\"rotate(-90 18 " << (kTop + kBottom) / 2 << ")\">" << y_label
      << "</text>\n";
}

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y0 = x0, y1 = -x0;
  for (const Series& s : series) {
    if (s.x.size() != s.y.size()) {
      throw std::invalid_argument("line chart: x/y length mismatch in '" + s.name + "'");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
        x0 = std::min(x0, s.x[i]);
        x1 = std::max(x1, s.x[i]);
        y0 = std::min(y0, s.y[i]);
        y1 = std::max(y1, s.y[i]);
      }
    }
  }
  if (!std::isfinite(x0)) {  // no data: draw empty axes over [0, 1]
    x0 = 0.0;
    x1 = 1.0;
    y0 = 0.0;
    y1 = 1.0;
  }
  if (x1 == x0) {
    x1 = x0 + 1.0;
  }
  if (y1 == y0) {
    y1 = y0 + 1.0;
  }

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  axes(out, title, x_label, y_label, x0, x1, y0, y1);

  int color = 0;
  double legend_y = kTop + 6.0;
  for (const Series& s : series) {
    const char* stroke = kPalette[color % 8];
    out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        continue;
      }
      const double px = kLeft + (s.x[i] - x0) / (x1 - x0) * (kRight - kLeft);
      const double py = kBottom - (s.y[i] - y0) / (y1 - y0) * (kBottom - kTop);
      out << coord(px) << "," << coord(py) << " ";
    }
    out << "\"/>\n";
    out << "<text x=\"" << kRight - 8 << "\" y=\"" << coord(legend_y)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
        << stroke << "\">" << s.name << "</text>\n";
    legend_y += 16.0;
    ++color;
  }
  out << "</svg>\n";
  return out.str();
}

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
  atomic_write_file(path, render_line_chart(title, x_label, y_label, series));
}

std::string render_bar_chart(const std::string& title, const std::string& y_label,
                             const std::vector<std::string>& labels,
                             const std::vector<double>& values,
                             const std::vector<double>& errors) {
  if (labels.size() != values.size() ||
      (!errors.empty() && errors.size() != values.size())) {
    throw std::invalid_argument("bar chart: label/value/error lengths differ");
  }
  double y1 = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double err = errors.empty() ? 0.0 : errors[i];
    y1 = std::max(y1, values[i] + err);
  }
  if (y1 == 0.0) {
    y1 = 1.0;
  }
  y1 *= 1.1;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << kWidth << " "
      << kHeight << "\">\n";
  axes(out, title, "", y_label, 0.0, static_cast<double>(std::max<std::size_t>(1, values.size())),
       0.0, y1);

  const double span = kRight - kLeft;
  const double slot = span / std::max<std::size_t>(1, values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double cx = kLeft + (static_cast<double>(i) + 0.5) * slot;
    const double w = slot * 0.6;
    const double h = values[i] / y1 * (kBottom - kTop);
    out << "<rect x=\"" << coord(cx - w / 2) << "\" y=\"" << coord(kBottom - h)
        << "\" width=\"" << coord(w) << "\" height=\"" << coord(h) << "\" fill=\""
        << kPalette[i % 8] << "\"/>\n";
    if (!errors.empty() && errors[i] > 0.0) {
      const double e = errors[i] / y1 * (kBottom - kTop);
      out << "<line x1=\"" << coord(cx) << "\" y1=\"" << coord(kBottom - h - e) << "\" x2=\""
          << coord(cx) << "\" y2=\"" << coord(kBottom - h + e)
          << "\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
    }
    out << "<text x=\"" << coord(cx) << "\" y=\"" << kBottom + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << labels[i] << "</text>\n";
    out << "<text x=\"" << coord(cx) << "\" y=\"" << coord(kBottom - h - 6)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << tick_label(values[i]) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void write_bar_chart(const std::string& path, const std::string& title,
                     const std::string& y_label, const std::vector<std::string>& labels,
                     const std::vector<double>& values, const std::vector<double>& errors) {
  atomic_write_file(path, render_bar_chart(title, y_label, labels, values, errors));
}

// ---------------------------------------------------------------------------
// Run reports
// ---------------------------------------------------------------------------

namespace {

json trace_to_json(const TimeTrace& trace) {
  return json{{"mean_t", trace.mean_t},
              {"std_t", trace.std_t},
              {"mean_reward", trace.mean_reward},
              {"entropy", trace.entropy}};
}

TimeTrace trace_from_json(const json& j) {
  TimeTrace trace;
  trace.mean_t = j.at("mean_t").get<std::vector<double>>();
  trace.std_t = j.at("std_t").get<std::vector<double>>();
  trace.mean_reward = j.at("mean_reward").get<std::vector<double>>();
  trace.entropy = j.at("entropy").get<std::vector<double>>();
  return trace;
}

}  // namespace

json RunReport::to_json() const {
  json seeds_json = json::array();
  for (const SeedRunReport& s : seeds) {
    seeds_json.push_back(json{{"seed", s.seed},
                              {"stage1_loss", s.stage1_loss},
                              {"stage2_loss", s.stage2_loss},
                              {"train_accuracy", s.train_accuracy},
                              {"test_accuracy", s.test_accuracy},
                              {"time_trace", trace_to_json(s.trace)},
                              {"final_mean_t", s.final_mean_t},
                              {"final_mean_t_quantile", s.final_mean_t_quantile},
                              {"probe_t", s.probe_t},
                              {"probe_erank", s.probe_erank},
                              {"probe_separability", s.probe_separability},
                              {"probe_attention_off_diagonal", s.probe_attention_off_diagonal}});
  }
  json ablation_json = json::array();
  for (const AblationRow& row : ablation) {
    ablation_json.push_back(json{{"mode", row.mode},
                                 {"seed_accuracy", row.seed_accuracy},
                                 {"mean", row.mean},
                                 {"stddev", row.stddev}});
  }
  return json{{"schema_version", schema_version},
              {"kind", kind},
              {"config", config},
              {"config_hash", config_hash},
              {"seeds", seeds_json},
              {"ablation", ablation_json},
              {"wall_clock_seconds", wall_clock_seconds}};
}

RunReport RunReport::from_json(const json& j) {
  RunReport report;
  report.schema_version = j.at("schema_version").get<int>();
  if (report.schema_version != 1) {
    throw ConfigError("unsupported report schema version");
  }
  report.kind = j.at("kind").get<std::string>();
  report.config = j.at("config");
  report.config_hash = j.at("config_hash").get<std::string>();
  for (const json& s : j.at("seeds")) {
    SeedRunReport seed;
    seed.seed = s.at("seed").get<std::uint64_t>();
    seed.stage1_loss = s.at("stage1_loss").get<std::vector<double>>();
    seed.stage2_loss = s.at("stage2_loss").get<std::vector<double>>();
    seed.train_accuracy = s.at("train_accuracy").get<double>();
    seed.test_accuracy = s.at("test_accuracy").get<double>();
    seed.trace = trace_from_json(s.at("time_trace"));
    seed.final_mean_t = s.at("final_mean_t").get<double>();
    seed.final_mean_t_quantile = s.at("final_mean_t_quantile").get<double>();
    seed.probe_t = s.at("probe_t").get<std::vector<int>>();
    seed.probe_erank = s.at("probe_erank").get<std::vector<double>>();
    seed.probe_separability = s.at("probe_separability").get<std::vector<double>>();
    seed.probe_attention_off_diagonal =
        s.at("probe_attention_off_diagonal").get<std::vector<double>>();
    report.seeds.push_back(std::move(seed));
  }
  for (const json& a : j.at("ablation")) {
    AblationRow row;
    row.mode = a.at("mode").get<std::string>();
    row.seed_accuracy = a.at("seed_accuracy").get<std::vector<double>>();
    row.mean = a.at("mean").get<double>();
    row.stddev = a.at("stddev").get<double>();
    report.ablation.push_back(std::move(row));
  }
  report.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  return report;
}

std::string report_determinism_key(const RunReport& report) {
  json j = report.to_json();
  j.erase("wall_clock_seconds");
  return j.dump();
}

void emit_report(const RunReport& report, const std::string& dir) {
  const std::filesystem::path base(dir);
  std::filesystem::create_directories(base);
  atomic_write_file((base / "report.json").string(), report.to_json().dump(2) + "\n");

  // Loss curves (one column per seed and stage).
  std::size_t s1 = 0, s2 = 0;
  for (const SeedRunReport& s : report.seeds) {
    s1 = std::max(s1, s.stage1_loss.size());
    s2 = std::max(s2, s.stage2_loss.size());
  }
  if (s1 + s2 > 0) {
    std::vector<Series> curves;
    for (const SeedRunReport& s : report.seeds) {
      if (!s.stage1_loss.empty()) {
        Series ser;
        ser.name = "stage1 seed " + std::to_string(s.seed);
        for (std::size_t e = 0; e < s.stage1_loss.size(); ++e) {
          ser.x.push_back(static_cast<double>(e));
          ser.y.push_back(s.stage1_loss[e]);
        }
        curves.push_back(std::move(ser));
      }
      if (!s.stage2_loss.empty()) {
        Series ser;
        ser.name = "stage2 seed " + std::to_string(s.seed);
        for (std::size_t e = 0; e < s.stage2_loss.size(); ++e) {
          ser.x.push_back(static_cast<double>(e));
          ser.y.push_back(s.stage2_loss[e]);
        }
        curves.push_back(std::move(ser));
      }
    }
    write_line_chart((base / "loss_curves.svg").string(), "Training loss", "epoch", "loss",
                     curves);
  }

  // Time-selection traces.
  bool any_trace = false;
  for (const SeedRunReport& s : report.seeds) {
    if (s.trace.size() > 0) {
      any_trace = true;
      CsvTable table;
      table.columns = {"step", "mean_t", "std_t", "mean_reward", "entropy"};
      for (std::size_t i = 0; i < s.trace.size(); ++i) {
        table.rows.push_back({static_cast<double>(i), s.trace.mean_t[i], s.trace.std_t[i],
                              s.trace.mean_reward[i], s.trace.entropy[i]});
      }
      write_csv(table, (base / ("time_trace_seed" + std::to_string(s.seed) + ".csv")).string());
    }
  }
  if (any_trace) {
    std::vector<Series> traces;
    for (const SeedRunReport& s : report.seeds) {
      if (s.trace.size() == 0) {
        continue;
      }
      Series ser;
      ser.name = "seed " + std::to_string(s.seed);
      for (std::size_t i = 0; i < s.trace.size(); ++i) {
        ser.x.push_back(static_cast<double>(i));
        ser.y.push_back(s.trace.mean_t[i]);
      }
      traces.push_back(std::move(ser));
    }
    write_line_chart((base / "time_trace.svg").string(), "Selected timestep", "step",
                     "mean t", traces);
  }

  // Probe summaries.
  bool any_probe = false;
  std::vector<Series> eranks;
  for (const SeedRunReport& s : report.seeds) {
    if (s.probe_t.empty()) {
      continue;
    }
    any_probe = true;
    Series ser;
    ser.name = "seed " + std::to_string(s.seed);
    for (std::size_t i = 0; i < s.probe_t.size(); ++i) {
      ser.x.push_back(static_cast<double>(s.probe_t[i]));
      ser.y.push_back(s.probe_erank[i]);
    }
    eranks.push_back(std::move(ser));
    CsvTable table;
    table.columns = {"t", "effective_rank", "separability", "attention_off_diagonal"};
    for (std::size_t i = 0; i < s.probe_t.size(); ++i) {
      table.rows.push_back({static_cast<double>(s.probe_t[i]), s.probe_erank[i],
                            s.probe_separability[i], s.probe_attention_off_diagonal[i]});
    }
    write_csv(table, (base / ("probe_seed" + std::to_string(s.seed) + ".csv")).string());
  }
  if (any_probe) {
    write_line_chart((base / "erank_vs_t.svg").string(), "Effective rank by timestep", "t",
                     "effective rank", eranks);
  }

  // Ablation table.
  if (!report.ablation.empty()) {
    CsvTable table;
    table.columns = {"mean_accuracy", "stddev"};
    std::size_t max_seeds = 0;
    for (const AblationRow& row : report.ablation) {
      max_seeds = std::max(max_seeds, row.seed_accuracy.size());
    }
    for (std::size_t i = 0; i < max_seeds; ++i) {
      table.columns.push_back("seed" + std::to_string(i));
    }
    // The numeric CSV holds doubles only; mode names ride in a sidecar file
    // (row order matches).
    std::vector<std::string> labels;
    std::vector<double> means, errs;
    for (const AblationRow& row : report.ablation) {
      std::vector<double> r{row.mean, row.stddev};
      for (double a : row.seed_accuracy) {
        r.push_back(a);
      }
      while (r.size() < table.columns.size()) {
        r.push_back(std::numeric_limits<double>::quiet_NaN());
      }
      table.rows.push_back(std::move(r));
      labels.push_back(row.mode);
      means.push_back(row.mean);
      errs.push_back(row.stddev);
    }
    std::string label_lines;
    for (const std::string& l : labels) {
      label_lines += l + "\n";
    }
    atomic_write_file((base / "ablation_modes.txt").string(), label_lines);
    write_csv(table, (base / "ablation.csv").string());
    write_bar_chart((base / "ablation.svg").string(), "Held-out accuracy by time selection",
                    "accuracy", labels, means, errs);
  }
}

}  // namespace diffrep
