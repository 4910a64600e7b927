#include "diffrep/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace diffrep {

FeatureBatch extract_features(const Teacher& teacher, const Matrix& x, int t) {
  if (t < 0 || t >= teacher.schedule.steps()) {
    throw std::invalid_argument("extract_features: timestep out of range");
  }
  const std::vector<int> t_index(static_cast<std::size_t>(x.rows()), t);
  const DenoiserTrace trace =
      denoiser_forward(teacher.ema_params, teacher.arch, x, t_index);
  FeatureBatch f;
  f.z = trace.z_mid(teacher.arch);
  f.t = t;
  f.layer = "mid_block." + std::to_string(teacher.arch.resolved_mid());
  return f;
}

namespace {

Vector centered_spectrum(const Matrix& z) {
  if (z.rows() < 2) {
    throw std::invalid_argument("spectral statistics need at least 2 samples");
  }
  require_finite(z, "feature batch");
  Matrix centered = z;
  centered.rowwise() -= z.colwise().mean();
  return svd(centered).sigma;
}

}  // namespace

Vector singular_spectrum(const FeatureBatch& f) { return centered_spectrum(f.z); }

double effective_rank(const FeatureBatch& f) {
  const Vector sigma = centered_spectrum(f.z);
  const double total = sigma.sum();
  if (!(total > 0.0)) {
    throw std::invalid_argument("effective_rank: all singular values are zero");
  }
  double entropy = 0.0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    const double p = sigma[i] / total;
    if (p > 0.0) {
      entropy -= p * std::log(p);
    }
  }
  return std::exp(entropy);
}

AttentionMass attention_mass(const Teacher& teacher, const Matrix& x, int t, int n_samples) {
  if (!teacher.arch.attention) {
    throw std::invalid_argument("attention_mass: teacher has no attention stage");
  }
  if (t < 0 || t >= teacher.schedule.steps()) {
    throw std::invalid_argument("attention_mass: timestep out of range");
  }
  if (n_samples < 1) {
    throw std::invalid_argument("attention_mass: need at least one sample");
  }
  const Eigen::Index rows = std::min<Eigen::Index>(n_samples, x.rows());
  const Matrix batch = x.topRows(rows);
  const std::vector<int> t_index(static_cast<std::size_t>(rows), t);
  const DenoiserTrace trace =
      denoiser_forward(teacher.ema_params, teacher.arch, batch, t_index);
  AttentionMass result;
  result.avg_map = trace.attn_avg;
  result.off_diagonal = 1.0 - result.avg_map.diagonal().mean();
  return result;
}

double cluster_separability(const FeatureBatch& f, const std::vector<int>& y) {
  const Eigen::Index n = f.z.rows();
  if (static_cast<Eigen::Index>(y.size()) != n) {
    throw std::invalid_argument("cluster_separability: one label per row required");
  }
  const int classes = y.empty() ? 0 : *std::max_element(y.begin(), y.end()) + 1;
  std::vector<int> counts(static_cast<std::size_t>(classes), 0);
  for (int label : y) {
    if (label < 0) {
      throw std::invalid_argument("cluster_separability: negative label");
    }
    ++counts[static_cast<std::size_t>(label)];
  }
  int populated = 0;
  for (int c : counts) {
    populated += c > 0 ? 1 : 0;
    if (c == 1) {
      throw std::invalid_argument("cluster_separability: every class needs >= 2 samples");
    }
  }
  if (populated < 2) {
    throw std::invalid_argument("cluster_separability: need at least 2 classes");
  }

  Matrix dist(n, n);
  double max_dist = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = (f.z.row(i) - f.z.row(j)).norm();
      dist(i, j) = d;
      dist(j, i) = d;
      max_dist = std::max(max_dist, d);
    }
  }
  if (max_dist == 0.0) {
    throw std::invalid_argument("cluster_separability: all features identical");
  }

  double score = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int own = y[static_cast<std::size_t>(i)];
    Vector sums = Vector::Zero(classes);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) {
        sums[y[static_cast<std::size_t>(j)]] += dist(i, j);
      }
    }
    const double a = sums[own] / static_cast<double>(counts[static_cast<std::size_t>(own)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < classes; ++c) {
      if (c != own && counts[static_cast<std::size_t>(c)] > 0) {
        b = std::min(b, sums[c] / static_cast<double>(counts[static_cast<std::size_t>(c)]));
      }
    }
    const double denom = std::max(a, b);
    score += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return score / static_cast<double>(n);
}

ProbeReport probe_teacher(const Teacher& teacher, const LabeledDataset& data,
                          const std::vector<int>& t_grid, int attention_samples) {
  ProbeReport report;
  report.t_grid = t_grid;
  for (int t : t_grid) {
    const FeatureBatch f = extract_features(teacher, data.x, t);
    report.alpha_bar.push_back(teacher.schedule.alpha_bar_index(t));
    report.spectra.push_back(singular_spectrum(f));
    report.erank.push_back(effective_rank(f));
    report.separability.push_back(cluster_separability(f, data.y));
    if (teacher.arch.attention) {
      report.attention_off_diagonal.push_back(
          attention_mass(teacher, data.x, t, attention_samples).off_diagonal);
    } else {
      report.attention_off_diagonal.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return report;
}

void write_probe_csv(const ProbeReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  const Eigen::Index k = report.spectra.empty() ? 0 : report.spectra.front().size();
  out << "t,alpha_bar,effective_rank,separability,attention_off_diagonal";
  for (Eigen::Index i = 0; i < k; ++i) {
    out << ",sigma" << i + 1;
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    out << ",sigma_share" << i + 1;
  }
  out << "\n";
  char buf[64];
  auto emit = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << "," << buf;
  };
  for (std::size_t row = 0; row < report.t_grid.size(); ++row) {
    out << report.t_grid[row];
    emit(report.alpha_bar[row]);
    emit(report.erank[row]);
    emit(report.separability[row]);
    emit(report.attention_off_diagonal[row]);
    const Vector& sigma = report.spectra[row];
    const double total = sigma.sum();
    for (Eigen::Index i = 0; i < k; ++i) {
      emit(sigma[i]);
    }
    for (Eigen::Index i = 0; i < k; ++i) {
      emit(total > 0.0 ? sigma[i] / total : 0.0);
    }
    out << "\n";
  }
}

}  // namespace diffrep
