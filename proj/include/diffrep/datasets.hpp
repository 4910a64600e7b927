#pragma once

#include "diffrep/numeric.hpp"

#include <string>
#include <utility>
#include <vector>

namespace diffrep {

/// Labeled samples as rows, zero-mean normalized after construction (the
/// linear analysis assumes centered data).
struct LabeledDataset {
  Matrix x;            // n x d
  std::vector<int> y;  // labels in [0, classes)
  int classes = 0;
  Vector feature_mean;  // per-dimension mean removed by normalization
  Vector feature_std;   // per-dimension std at normalization time

  int size() const { return static_cast<int>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
};

/// Subtracts the per-dimension mean in place and records mean/std.
/// Idempotent up to floating-point roundoff.
void zero_mean_normalize(LabeledDataset& ds);

/// k Gaussian clusters with unit-sphere means and the given within-class
/// spread, normalized to zero mean. Labels cycle 0..k-1.
LabeledDataset gaussian_mixture(int k, int d, int n, double spread, RngStream& rng);

/// 8x8 images (flattened to d=64) of per-class horizontal/vertical bar
/// patterns plus Gaussian pixel noise; k in [2, 8].
LabeledDataset bars8x8(int k, int n, double noise, RngStream& rng);

/// Class-stratified split; each class contributes round(fraction * count)
/// training samples (at least 1, at most count-1).
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds,
                                                double train_fraction, RngStream& rng);

/// CSV with header x0..x{d-1},label; values printed round-trip exact.
void save_csv(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_csv(const std::string& path);

/// Binary form reusing the parameter-file container.
void save_binary(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_binary(const std::string& path);

}  // namespace diffrep
