#pragma once

#include "diffrep/diffusion.hpp"
#include "diffrep/numeric.hpp"

#include <string>
#include <vector>

namespace diffrep {

struct FeatureBatch {
  Matrix z;  // n x feature_dim
  int t = 0;
  std::string layer;
};

/// Mid-block activations of the EMA teacher on clean inputs (no noise is
/// added; only the timestep conditioning varies). t is the zero-based index.
FeatureBatch extract_features(const Teacher& teacher, const Matrix& x, int t);

/// Singular values of the column-centered feature matrix, sorted desc.
Vector singular_spectrum(const FeatureBatch& f);

/// exp of the Shannon entropy of the L1-normalized singular values of the
/// centered feature matrix. Lies in [1, #nonzero singular values].
double effective_rank(const FeatureBatch& f);

struct AttentionMass {
  Matrix avg_map;            // tokens x tokens, rows sum to 1
  double off_diagonal = 0.0;  // 1 - mean diagonal weight
};

/// Attention map averaged over the first n_samples inputs at timestep t.
AttentionMass attention_mass(const Teacher& teacher, const Matrix& x, int t,
                             int n_samples = 128);

/// Mean silhouette coefficient (Euclidean). Requires >= 2 classes with
/// >= 2 samples each; rejects all-identical features.
double cluster_separability(const FeatureBatch& f, const std::vector<int>& y);

struct ProbeReport {
  std::vector<int> t_grid;            // zero-based timestep indices
  std::vector<double> alpha_bar;      // at index+1
  std::vector<Vector> spectra;        // per-t singular values
  std::vector<double> erank;
  std::vector<double> separability;
  std::vector<double> attention_off_diagonal;  // NaN when attention disabled
};

ProbeReport probe_teacher(const Teacher& teacher, const LabeledDataset& data,
                          const std::vector<int>& t_grid, int attention_samples = 128);

/// One row per t: raw singular values plus their L1-normalized shares
/// (the plotted normalization is a presentation choice, so both go out).
void write_probe_csv(const ProbeReport& report, const std::string& path);

}  // namespace diffrep
