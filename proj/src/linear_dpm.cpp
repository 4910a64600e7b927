#include "diffrep/linear_dpm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace diffrep {

Matrix LinearModel::composite() const {
  validate();
  return w_decode * w_encode + w_skip;
}

void LinearModel::validate() const {
  const Eigen::Index d = w_encode.rows();
  const Eigen::Index L = w_encode.cols();
  if (d < 1 || L < 1 || d >= L) {
    throw std::invalid_argument("linear model: encoder must be a d x L bottleneck with d < L");
  }
  if (w_decode.rows() != L || w_decode.cols() != d) {
    throw std::invalid_argument("linear model: decoder must be L x d");
  }
  if (w_skip.rows() != L || w_skip.cols() != L) {
    throw std::invalid_argument("linear model: skip must be L x L");
  }
}

void require_psd(const Matrix& sigma, const std::string& what) {
  if (sigma.rows() != sigma.cols() || sigma.rows() < 1) {
    throw std::invalid_argument(what + ": covariance must be square");
  }
  require_finite(sigma, what);
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
    throw std::invalid_argument(what + ": covariance must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sigma, Eigen::EigenvaluesOnly);
  if (solver.eigenvalues().minCoeff() < -1e-10) {
    throw std::invalid_argument(what + ": covariance must be positive semi-definite");
  }
}

Matrix psd_sqrt(const Matrix& sigma) {
  require_psd(sigma, "psd_sqrt");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sigma);
  Vector ev = solver.eigenvalues().cwiseMax(0.0);
  return solver.eigenvectors() * ev.cwiseSqrt().asDiagonal() *
         solver.eigenvectors().transpose();
}

McLossResult mc_loss(const Matrix& composite, const Matrix& sigma_xx, double alpha_bar,
                     int n_samples, RngStream& rng) {
  require_psd(sigma_xx, "mc_loss");
  if (!(alpha_bar > 0.0) || !(alpha_bar < 1.0)) {
    throw std::invalid_argument("mc_loss: alpha_bar must lie in (0, 1)");
  }
  if (n_samples < 100) {
    throw std::invalid_argument("mc_loss: need at least 100 samples");
  }
  const Eigen::Index L = sigma_xx.rows();
  if (composite.rows() != L || composite.cols() != L) {
    throw std::invalid_argument("mc_loss: composite must match the covariance size");
  }
  const Matrix root = psd_sqrt(sigma_xx);
  const double s0 = std::sqrt(alpha_bar);
  const double s1 = std::sqrt(1.0 - alpha_bar);

  double sum = 0.0, sum_sq = 0.0;
  const int chunk = 4096;
  for (int done = 0; done < n_samples; done += chunk) {
    const int m = std::min(chunk, n_samples - done);
    const Matrix x0 = standard_normal(rng, m, static_cast<int>(L)) * root;
    const Matrix eps = standard_normal(rng, m, static_cast<int>(L));
    const Matrix xt = s0 * x0 + s1 * eps;
    const Vector per = (eps - xt * composite).rowwise().squaredNorm();
    sum += per.sum();
    sum_sq += per.squaredNorm();
  }
  const double n = static_cast<double>(n_samples);
  McLossResult result;
  result.estimate = sum / n;
  const double var = std::max(0.0, sum_sq / n - result.estimate * result.estimate);
  result.std_error = std::sqrt(var / n);
  return result;
}

McLossResult mc_loss(const LinearModel& model, const Matrix& sigma_xx, double alpha_bar,
                     int n_samples, RngStream& rng) {
  return mc_loss(model.composite(), sigma_xx, alpha_bar, n_samples, rng);
}

AnalyticLossResult analytic_loss(const Matrix& composite, const Matrix& sigma_xx,
                                 double alpha_bar) {
  const Eigen::Index L = sigma_xx.rows();
  if (sigma_xx.cols() != L || composite.rows() != L || composite.cols() != L) {
    throw std::invalid_argument("analytic_loss: all matrices must be L x L");
  }
  AnalyticLossResult result;
  result.representation =
      alpha_bar * (composite.transpose() * sigma_xx * composite).trace();
  const Matrix residual =
      Matrix::Identity(L, L) - std::sqrt(1.0 - alpha_bar) * composite;
  result.regularization = residual.squaredNorm();
  result.total = result.representation + result.regularization;
  return result;
}

Matrix analytic_loss_grad(const Matrix& composite, const Matrix& sigma_xx, double alpha_bar) {
  const Eigen::Index L = sigma_xx.rows();
  const double c = std::sqrt(1.0 - alpha_bar);
  return 2.0 * alpha_bar * sigma_xx * composite -
         2.0 * c * (Matrix::Identity(L, L) - c * composite);
}

Matrix optimal_composite(const Matrix& sigma_xx, double alpha_bar) {
  require_psd(sigma_xx, "optimal_composite");
  if (!(alpha_bar > 0.0) || !(alpha_bar < 1.0)) {
    throw std::invalid_argument("optimal_composite: alpha_bar must lie in (0, 1)");
  }
  const Eigen::Index L = sigma_xx.rows();
  const Matrix system =
      alpha_bar * sigma_xx + (1.0 - alpha_bar) * Matrix::Identity(L, L);
  Eigen::LDLT<Matrix> solver(system);
  if (solver.info() != Eigen::Success) {
    throw NumericalError("optimal_composite: singular system");
  }
  return std::sqrt(1.0 - alpha_bar) * solver.solve(Matrix::Identity(L, L));
}

std::vector<TradeoffRow> tradeoff_curve(const Matrix& sigma_xx, const NoiseSchedule& schedule,
                                        const std::vector<int>& t_grid) {
  require_psd(sigma_xx, "tradeoff_curve");
  if (t_grid.empty()) {
    throw std::invalid_argument("tradeoff_curve: empty grid");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sigma_xx, Eigen::EigenvaluesOnly);
  Vector lambda = solver.eigenvalues().cwiseMax(0.0);  // ascending
  const double lambda_min = lambda[0];
  const double lambda_max = lambda[lambda.size() - 1];

  std::vector<TradeoffRow> rows;
  rows.reserve(t_grid.size());
  for (int t : t_grid) {
    const double abar = schedule.alpha_bar(t);
    TradeoffRow row;
    row.t = t;
    row.alpha_bar = abar;
    row.sigma.resize(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
      // Ascending eigenvalues give descending singular values.
      row.sigma[i] = std::sqrt(1.0 - abar) / (abar * lambda[i] + (1.0 - abar));
    }
    row.condition_number =
        (abar * lambda_max + (1.0 - abar)) / (abar * lambda_min + (1.0 - abar));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_tradeoff_csv(const std::vector<TradeoffRow>& rows, const std::string& path) {
  if (rows.empty()) {
    throw std::invalid_argument("write_tradeoff_csv: no rows");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  out << "t,alpha_bar";
  for (Eigen::Index i = 0; i < rows.front().sigma.size(); ++i) {
    out << ",sigma" << i + 1;
  }
  out << ",kappa\n";
  char buf[64];
  for (const TradeoffRow& row : rows) {
    out << row.t;
    std::snprintf(buf, sizeof(buf), "%.17g", row.alpha_bar);
    out << "," << buf;
    for (Eigen::Index i = 0; i < row.sigma.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", row.sigma[i]);
      out << "," << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", row.condition_number);
    out << "," << buf << "\n";
  }
}

}  // namespace diffrep
