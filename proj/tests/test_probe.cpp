#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "diffrep/probe.hpp"
#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace diffrep;

namespace {

// Stacking [D; -D] keeps column means at zero, so the centered singular
// values are exactly sqrt(2) * diag entries (and effective rank is
// scale-invariant anyway).
FeatureBatch batch_with_spectrum(const Vector& diag) {
  const auto k = diag.size();
  Matrix z = Matrix::Zero(2 * k, k);
  z.topLeftCorner(k, k) = diag.asDiagonal();
  z.bottomLeftCorner(k, k) = -Matrix(diag.asDiagonal());
  FeatureBatch f;
  f.z = z;
  f.t = 0;
  f.layer = "synthetic";
  return f;
}

Teacher quick_teacher(int dim, int seed, bool attention = false, int tokens = 0) {
  RngStream data_rng(seed, 100);
  const LabeledDataset data = gaussian_mixture(2, dim, 128, 0.4, data_rng);
  DenoiserArch arch;
  arch.input_dim = dim;
  arch.hidden = {16, 8, 16};
  arch.time_embed_dim = 8;
  arch.attention = attention;
  arch.token_count = tokens;
  TeacherTrainConfig cfg;
  cfg.epochs = 25;
  cfg.batch_size = 64;
  cfg.lr = 0.01;
  RngStream rng(seed, 101);
  return train_teacher(arch, NoiseSchedule::linear(20, 1e-3, 0.1), data, cfg, rng).teacher;
}

}  // namespace

TEST_CASE("effective rank closed-form values") {
  Vector uniform(4);
  uniform << 1.0, 1.0, 1.0, 1.0;
  CHECK(effective_rank(batch_with_spectrum(uniform)) == doctest::Approx(4.0).epsilon(1e-9));

  Vector rank_one(4);
  rank_one << 1.0, 0.0, 0.0, 0.0;
  CHECK(effective_rank(batch_with_spectrum(rank_one)) == doctest::Approx(1.0).epsilon(1e-9));

  Vector mixed(3);
  mixed << 2.0, 1.0, 1.0;
  Vector p(3);
  p << 0.5, 0.25, 0.25;
  const double expected = std::exp(oracles::entropy_nats(p));
  CHECK(effective_rank(batch_with_spectrum(mixed)) == doctest::Approx(expected).epsilon(1e-9));
  CHECK(expected == doctest::Approx(2.8284).epsilon(1e-4));
}

TEST_CASE("effective rank bounds and scale invariance") {
  RngStream rng(7, 102);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(4, 20));
    const int d = static_cast<int>(rng.uniform_int(2, 8));
    FeatureBatch f;
    f.z = standard_normal(rng, n, d);
    const Vector sigma = singular_spectrum(f);
    int nonzero = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      nonzero += sigma[i] > 1e-12 ? 1 : 0;
    }
    const double erank = effective_rank(f);
    CHECK(erank >= 1.0 - 1e-12);
    CHECK(erank <= nonzero + 1e-9);

    FeatureBatch scaled;
    scaled.z = 37.5 * f.z;
    CHECK(effective_rank(scaled) == doctest::Approx(erank).epsilon(1e-9));
  }

  FeatureBatch zeros;
  zeros.z = Matrix::Zero(5, 3);
  CHECK_THROWS_AS(effective_rank(zeros), std::invalid_argument);
}

TEST_CASE("singular spectrum properties") {
  RngStream rng(9, 103);
  FeatureBatch f;
  f.z = standard_normal(rng, 10, 4);

  // Duplicating rows leaves the rank unchanged.
  FeatureBatch doubled;
  doubled.z.resize(20, 4);
  doubled.z.topRows(10) = f.z;
  doubled.z.bottomRows(10) = f.z;
  const Vector s1 = singular_spectrum(f);
  const Vector s2 = singular_spectrum(doubled);
  int r1 = 0, r2 = 0;
  for (Eigen::Index i = 0; i < 4; ++i) {
    r1 += s1[i] > 1e-10 ? 1 : 0;
    r2 += s2[i] > 1e-10 ? 1 : 0;
  }
  CHECK(r1 == r2);

  // Homogeneity.
  FeatureBatch scaled;
  scaled.z = 3.0 * f.z;
  const Vector s3 = singular_spectrum(scaled);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(s3[i] == doctest::Approx(3.0 * s1[i]).epsilon(1e-9));
  }

  // Squared singular values match the eigenvalues of the centered Gram.
  Matrix centered = f.z;
  centered.rowwise() -= f.z.colwise().mean();
  const Vector ev = oracles::symmetric_eigenvalues(centered.transpose() * centered);
  for (Eigen::Index i = 0; i < 4; ++i) {
    CHECK(s1[i] * s1[i] == doctest::Approx(ev[i]).epsilon(1e-8));
  }
}

TEST_CASE("cluster separability") {
  FeatureBatch far;
  far.z.resize(8, 2);
  std::vector<int> y;
  for (int i = 0; i < 8; ++i) {
    const int c = i < 4 ? 0 : 1;
    y.push_back(c);
    far.z.row(i) << (c == 0 ? -100.0 : 100.0) + 0.01 * i, 0.0;
  }
  CHECK(cluster_separability(far, y) > 0.99);

  // Random label permutations hover near zero.
  RngStream rng(11, 104);
  FeatureBatch blob;
  blob.z = standard_normal(rng, 80, 3);
  double mean_score = 0.0;
  const int reps = 10;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<int> labels(80);
    const auto perm = rng.permutation(80);
    for (int i = 0; i < 80; ++i) {
      labels[static_cast<std::size_t>(i)] = perm[static_cast<std::size_t>(i)] % 2;
    }
    mean_score += cluster_separability(blob, labels);
  }
  CHECK(std::abs(mean_score / reps) < 0.1);

  FeatureBatch identical;
  identical.z = Matrix::Ones(6, 2);
  CHECK_THROWS_AS(cluster_separability(identical, {0, 0, 0, 1, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(cluster_separability(far, std::vector<int>(8, 0)), std::invalid_argument);
}

TEST_CASE("feature extraction shapes and determinism") {
  const Teacher teacher = quick_teacher(6, 21);
  RngStream rng(23, 105);
  const Matrix x = standard_normal(rng, 12, 6);
  const FeatureBatch a = extract_features(teacher, x, 3);
  const FeatureBatch b = extract_features(teacher, x, 3);
  CHECK((a.z - b.z).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.z.cols() == teacher.arch.mid_width());
  CHECK(a.z.rows() == 12);

  // Early and late conditioning produce different features.
  const FeatureBatch early = extract_features(teacher, x, 0);
  const FeatureBatch late = extract_features(teacher, x, teacher.schedule.steps() - 1);
  CHECK((early.z - late.z).norm() > 0.0);

  CHECK_THROWS_AS(extract_features(teacher, x, teacher.schedule.steps()),
                  std::invalid_argument);
  CHECK_THROWS_AS(extract_features(teacher, x, -1), std::invalid_argument);
}

TEST_CASE("attention mass") {
  const Teacher plain = quick_teacher(6, 31);
  RngStream rng(33, 106);
  const Matrix x = standard_normal(rng, 16, 6);
  CHECK_THROWS_AS(attention_mass(plain, x, 1), std::invalid_argument);

  // Single-token config: the map is exactly [[1]].
  const Teacher single = quick_teacher(6, 35, true, 1);
  const AttentionMass deg = attention_mass(single, x, 1, 8);
  REQUIRE(deg.avg_map.rows() == 1);
  CHECK(deg.avg_map(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(deg.off_diagonal == doctest::Approx(0.0).epsilon(1e-12));

  const Teacher attn = quick_teacher(6, 37, true, 3);
  const AttentionMass mass = attention_mass(attn, x, 2, 16);
  REQUIRE(mass.avg_map.rows() == 3);
  for (int r = 0; r < 3; ++r) {
    CHECK(mass.avg_map.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(mass.off_diagonal >= 0.0);
  CHECK(mass.off_diagonal <= 1.0);
}

TEST_CASE("probe report and csv") {
  const Teacher teacher = quick_teacher(6, 41);
  RngStream rng(43, 107);
  const LabeledDataset data = gaussian_mixture(2, 6, 64, 0.4, rng);
  const ProbeReport report = probe_teacher(teacher, data, {0, 5, 10, 19});
  REQUIRE(report.t_grid.size() == 4);
  CHECK(report.erank.size() == 4);
  CHECK(std::isnan(report.attention_off_diagonal[0]));
  for (double ab : report.alpha_bar) {
    CHECK(ab > 0.0);
    CHECK(ab < 1.0);
  }

  const auto path = (std::filesystem::temp_directory_path() / "diffrep_probe.csv").string();
  write_probe_csv(report, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("t,alpha_bar,effective_rank,separability,attention_off_diagonal", 0) == 0);
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) {
    lines += line.empty() ? 0 : 1;
  }
  CHECK(lines == 4);
  std::filesystem::remove(path);
}
