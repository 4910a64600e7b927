#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffrep {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Thrown when a computation receives or produces non-finite values.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown on malformed configs or CLI input.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool all_finite(const Matrix& m);
void require_finite(const Matrix& m, const std::string& what);
void require_finite(double v, const std::string& what);

/// Counter-based deterministic random stream.
///
/// out_i = splitmix64_finalize(base + (i+1) * GAMMA), where base is derived
/// from (seed, stream_id) by double-mixing. The same (seed, stream_id) pair
/// replays the same sequence across processes; distinct stream ids give
/// statistically independent streams. Single-owner: not safe to share
/// mutably across threads.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform();
  /// Standard normal via Box-Muller (second draw cached).
  double normal();
  /// Uniform integer in [lo, hi), hi > lo.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Index sampled from an unnormalized non-negative weight vector.
  int categorical(const Vector& probs);
  /// Fisher-Yates permutation of {0, ..., n-1}.
  std::vector<int> permutation(int n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct SvdResult {
  Matrix u;      // orthonormal columns
  Vector sigma;  // non-negative, sorted non-increasing
  Matrix v;      // orthonormal columns
};

/// Thin SVD of a real matrix. Rejects non-finite or empty input.
SvdResult svd(const Matrix& m);

/// rows x cols matrix of i.i.d. N(0,1) entries, filled in row-major order.
Matrix standard_normal(RngStream& rng, int rows, int cols);

/// Central finite differences: g_i = (f(x + h e_i) - f(x - h e_i)) / (2h).
Vector central_diff(const std::function<double(const Vector&)>& f,
                    const Vector& theta, double h);

/// Numerically stable exp-normalize. Adding a constant to all logits leaves
/// the result unchanged.
Vector softmax(const Vector& logits);
Matrix softmax_rows(const Matrix& logits);

}  // namespace diffrep
