#include "diffrep/numeric.hpp"

#include <Eigen/SVD>

#include <bit>
#include <cmath>

static_assert(std::endian::native == std::endian::little,
              "serialization assumes a little-endian host");

namespace diffrep {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

std::uint64_t mix_bits(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

bool all_finite(const Matrix& m) { return m.allFinite(); }

void require_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) {
    throw NumericalError("non-finite values in " + what);
  }
}

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) {
    throw NumericalError("non-finite value in " + what);
  }
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  base_ = mix_bits(mix_bits(seed + kGamma) ^
                   (stream_id * 0x94D049BB133111EBull + 0x632BE59BD9B4E019ull));
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix_bits(base_ + counter_ * kGamma);
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi <= lo) {
    throw std::invalid_argument("uniform_int: empty range");
  }
  const auto range = static_cast<std::uint64_t>(hi - lo);
  // Lemire's multiply-shift; bias is below 2^-64 * range, negligible here.
  const auto v = static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * range) >> 64);
  return lo + static_cast<std::int64_t>(v);
}

int RngStream::categorical(const Vector& probs) {
  if (probs.size() == 0) {
    throw std::invalid_argument("categorical: empty weight vector");
  }
  const double total = probs.sum();
  if (!(total > 0.0) || !probs.allFinite() || probs.minCoeff() < 0.0) {
    throw std::invalid_argument("categorical: weights must be non-negative with positive sum");
  }
  const double u = uniform() * total;
  double cum = 0.0;
  for (int i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) {
      return i;
    }
  }
  return static_cast<int>(probs.size()) - 1;
}

std::vector<int> RngStream::permutation(int n) {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    idx[static_cast<std::size_t>(i)] = i;
  }
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(uniform_int(0, i + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

SvdResult svd(const Matrix& m) {
  if (m.rows() < 1 || m.cols() < 1) {
    throw std::invalid_argument("svd: empty matrix");
  }
  require_finite(m, "svd input");
  Eigen::JacobiSVD<Matrix> solver(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return SvdResult{solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

Matrix standard_normal(RngStream& rng, int rows, int cols) {
  if (rows < 1 || cols < 1) {
    throw std::invalid_argument("standard_normal: rows and cols must be >= 1");
  }
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      m(r, c) = rng.normal();
    }
  }
  return m;
}

Vector central_diff(const std::function<double(const Vector&)>& f,
                    const Vector& theta, double h) {
  if (!(h > 0.0)) {
    throw std::invalid_argument("central_diff: step must be positive");
  }
  Vector grad(theta.size());
  Vector probe = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + h;
    const double fp = f(probe);
    probe[i] = theta[i] - h;
    const double fm = f(probe);
    probe[i] = theta[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("central_diff: objective returned a non-finite value");
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

Vector softmax(const Vector& logits) {
  if (logits.size() == 0) {
    throw std::invalid_argument("softmax: empty logits");
  }
  if (!logits.allFinite()) {
    throw NumericalError("softmax: non-finite logits");
  }
  const Vector shifted = logits.array() - logits.maxCoeff();
  Vector p = shifted.array().exp();
  p /= p.sum();
  return p;
}

Matrix softmax_rows(const Matrix& logits) {
  if (logits.rows() == 0 || logits.cols() == 0) {
    throw std::invalid_argument("softmax_rows: empty logits");
  }
  if (!logits.allFinite()) {
    throw NumericalError("softmax_rows: non-finite logits");
  }
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::RowVectorXd row = logits.row(r).array() - logits.row(r).maxCoeff();
    row = row.array().exp();
    p.row(r) = row / row.sum();
  }
  return p;
}

}  // namespace diffrep
