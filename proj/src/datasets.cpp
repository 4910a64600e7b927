#include "diffrep/datasets.hpp"

#include "diffrep/autonet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace diffrep {

void zero_mean_normalize(LabeledDataset& ds) {
  if (ds.size() < 1) {
    throw std::invalid_argument("normalize: empty dataset");
  }
  const Vector mean = ds.x.colwise().mean();
  ds.x.rowwise() -= mean.transpose();
  Vector stddev(ds.dim());
  for (int c = 0; c < ds.dim(); ++c) {
    stddev[c] = std::sqrt(ds.x.col(c).squaredNorm() / static_cast<double>(ds.size()));
  }
  ds.feature_mean = mean;
  ds.feature_std = stddev;
}

LabeledDataset gaussian_mixture(int k, int d, int n, double spread, RngStream& rng) {
  if (k < 2 || d < 2 || n < k || spread < 0.0) {
    throw std::invalid_argument("gaussian_mixture: need k >= 2, d >= 2, n >= k, spread >= 0");
  }
  // Class means drawn on the unit sphere.
  Matrix means(k, d);
  for (int c = 0; c < k; ++c) {
    Vector v = standard_normal(rng, d, 1).col(0);
    means.row(c) = v.transpose() / v.norm();
  }
  LabeledDataset ds;
  ds.classes = k;
  ds.x.resize(n, d);
  ds.y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int c = i % k;
    ds.y[static_cast<std::size_t>(i)] = c;
    for (int j = 0; j < d; ++j) {
      ds.x(i, j) = means(c, j) + spread * rng.normal();
    }
  }
  zero_mean_normalize(ds);
  return ds;
}

LabeledDataset bars8x8(int k, int n, double noise, RngStream& rng) {
  if (k < 2 || k > 8) {
    throw std::invalid_argument("bars8x8: k must be in [2, 8]");
  }
  if (n < k || noise < 0.0) {
    throw std::invalid_argument("bars8x8: need n >= k and noise >= 0");
  }
  // Classes 0..3 are horizontal bars at rows {0,2,4,6}; classes 4..7 are
  // vertical bars at the same columns.
  auto pattern = [](int c, int row, int col) {
    if (c < 4) {
      return row == 2 * c ? 1.0 : 0.0;
    }
    return col == 2 * (c - 4) ? 1.0 : 0.0;
  };
  LabeledDataset ds;
  ds.classes = k;
  ds.x.resize(n, 64);
  ds.y.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int c = i % k;
    ds.y[static_cast<std::size_t>(i)] = c;
    for (int row = 0; row < 8; ++row) {
      for (int col = 0; col < 8; ++col) {
        ds.x(i, 8 * row + col) = pattern(c, row, col) + noise * rng.normal();
      }
    }
  }
  zero_mean_normalize(ds);
  return ds;
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds,
                                                double train_fraction, RngStream& rng) {
  if (!(train_fraction > 0.0) || !(train_fraction < 1.0)) {
    throw std::invalid_argument("split: fraction must be in (0, 1)");
  }
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.classes));
  for (int i = 0; i < ds.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.y[static_cast<std::size_t>(i)])].push_back(i);
  }
  std::vector<int> train_idx, test_idx;
  for (auto& members : by_class) {
    if (members.size() < 2) {
      throw std::invalid_argument("split: every class needs at least 2 samples");
    }
    // Shuffle within the class, deterministically per stream.
    const auto perm = rng.permutation(static_cast<int>(members.size()));
    const auto take = std::clamp<std::size_t>(
        static_cast<std::size_t>(
            std::llround(train_fraction * static_cast<double>(members.size()))),
        1, members.size() - 1);
    for (std::size_t j = 0; j < members.size(); ++j) {
      const int idx = members[static_cast<std::size_t>(perm[j])];
      (j < take ? train_idx : test_idx).push_back(idx);
    }
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  auto gather = [&](const std::vector<int>& idx) {
    LabeledDataset out;
    out.classes = ds.classes;
    out.feature_mean = ds.feature_mean;
    out.feature_std = ds.feature_std;
    out.x.resize(static_cast<Eigen::Index>(idx.size()), ds.dim());
    out.y.resize(idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      out.x.row(static_cast<Eigen::Index>(j)) = ds.x.row(idx[j]);
      out.y[j] = ds.y[static_cast<std::size_t>(idx[j])];
    }
    return out;
  };
  return {gather(train_idx), gather(test_idx)};
}

void save_csv(const LabeledDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  for (int c = 0; c < ds.dim(); ++c) {
    out << "x" << c << ",";
  }
  out << "label\n";
  char buf[64];
  for (int i = 0; i < ds.size(); ++i) {
    for (int c = 0; c < ds.dim(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.x(i, c));
      out << buf << ",";
    }
    out << ds.y[static_cast<std::size_t>(i)] << "\n";
  }
}

LabeledDataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("empty CSV '" + path + "'");
  }
  const auto cols = static_cast<int>(std::count(line.begin(), line.end(), ',') + 1);
  const int dim = cols - 1;
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) {
      continue;
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      row.push_back(std::stod(cell));
    }
    if (static_cast<int>(row.size()) != cols) {
      throw std::runtime_error("ragged CSV row in '" + path + "'");
    }
    labels.push_back(static_cast<int>(std::llround(row.back())));
    row.pop_back();
    rows.push_back(std::move(row));
  }
  LabeledDataset ds;
  ds.x.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < dim; ++c) {
      ds.x(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
    }
  }
  ds.y = std::move(labels);
  ds.classes = ds.y.empty() ? 0 : *std::max_element(ds.y.begin(), ds.y.end()) + 1;
  ds.feature_mean = Vector::Zero(dim);
  ds.feature_std = Vector::Ones(dim);
  return ds;
}

void save_binary(const LabeledDataset& ds, const std::string& path) {
  ParamStore store;
  store.insert("x", ds.x);
  Matrix labels(ds.size(), 1);
  for (int i = 0; i < ds.size(); ++i) {
    labels(i, 0) = static_cast<double>(ds.y[static_cast<std::size_t>(i)]);
  }
  store.insert("y", labels);
  store.insert("feature_mean", ds.feature_mean.transpose());
  store.insert("feature_std", ds.feature_std.transpose());
  store.insert("classes", Matrix::Constant(1, 1, static_cast<double>(ds.classes)));
  save_params(store, path);
}

LabeledDataset load_binary(const std::string& path) {
  const ParamStore store = load_params(path);
  LabeledDataset ds;
  ds.x = store.at("x");
  const Matrix& labels = store.at("y");
  ds.y.resize(static_cast<std::size_t>(labels.rows()));
  for (Eigen::Index i = 0; i < labels.rows(); ++i) {
    ds.y[static_cast<std::size_t>(i)] = static_cast<int>(std::llround(labels(i, 0)));
  }
  ds.feature_mean = store.at("feature_mean").row(0).transpose();
  ds.feature_std = store.at("feature_std").row(0).transpose();
  ds.classes = static_cast<int>(std::llround(store.at("classes")(0, 0)));
  return ds;
}

}  // namespace diffrep
