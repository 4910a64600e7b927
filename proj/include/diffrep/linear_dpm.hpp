#pragma once

#include "diffrep/diffusion.hpp"
#include "diffrep/numeric.hpp"

#include <string>
#include <vector>

namespace diffrep {

/// Linear encoder/decoder/skip triple. Only the composite map is
/// identifiable; the loss depends on the triple through it alone.
struct LinearModel {
  Matrix w_encode;  // d x L
  Matrix w_decode;  // L x d
  Matrix w_skip;    // L x L

  /// P = W_D * W_E + W_S (L x L).
  Matrix composite() const;
  void validate() const;  // bottleneck d < L and consistent shapes
};

/// Rejects matrices that are asymmetric beyond 1e-10 or have eigenvalues
/// below -1e-10.
void require_psd(const Matrix& sigma, const std::string& what);

/// Symmetric PSD square root (eigenvalues clamped at zero).
Matrix psd_sqrt(const Matrix& sigma);

struct McLossResult {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo estimate of E||eps - x_t P||^2 with x0 ~ N(0, Sigma) rows,
/// eps ~ N(0, I), x_t = sqrt(abar) x0 + sqrt(1-abar) eps.
McLossResult mc_loss(const Matrix& composite, const Matrix& sigma_xx, double alpha_bar,
                     int n_samples, RngStream& rng);
McLossResult mc_loss(const LinearModel& model, const Matrix& sigma_xx, double alpha_bar,
                     int n_samples, RngStream& rng);

struct AnalyticLossResult {
  double total = 0.0;
  double representation = 0.0;  // abar * trace(P^T Sigma P)
  double regularization = 0.0;  // ||I - sqrt(1-abar) P||_F^2
};

AnalyticLossResult analytic_loss(const Matrix& composite, const Matrix& sigma_xx,
                                 double alpha_bar);

/// Gradient of the analytic loss with respect to the composite map.
Matrix analytic_loss_grad(const Matrix& composite, const Matrix& sigma_xx, double alpha_bar);

/// Minimizer of the analytic loss:
/// P* = sqrt(1-abar) * (abar * Sigma + (1-abar) I)^{-1}.
Matrix optimal_composite(const Matrix& sigma_xx, double alpha_bar);

struct TradeoffRow {
  int t = 0;  // noise level in [1, steps]
  double alpha_bar = 0.0;
  Vector sigma;  // singular values of the optimal composite, sorted desc
  double condition_number = 0.0;
};

/// Spectrum and conditioning of the optimal composite along the schedule:
/// sigma_i = sqrt(1-abar)/(abar lambda_i + 1-abar),
/// kappa   = (abar lambda_max + 1-abar)/(abar lambda_min + 1-abar).
std::vector<TradeoffRow> tradeoff_curve(const Matrix& sigma_xx, const NoiseSchedule& schedule,
                                        const std::vector<int>& t_grid);

void write_tradeoff_csv(const std::vector<TradeoffRow>& rows, const std::string& path);

}  // namespace diffrep
