#pragma once

#include "diffrep/autonet.hpp"
#include "diffrep/datasets.hpp"
#include "diffrep/numeric.hpp"

#include <string>
#include <vector>

namespace diffrep {

/// Forward-process noise levels. Levels are 1-based (level 0 is the clean
/// convention with alpha_bar(0) == 1); network conditioning uses the
/// zero-based index level-1, matching the policy's action set.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  /// Betas linearly interpolated between beta_start and beta_end inclusive.
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);

  int steps() const { return steps_; }
  double beta(int level) const;       // level in [1, steps]
  double alpha(int level) const;      // 1 - beta
  double alpha_bar(int level) const;  // level in [0, steps]
  /// alpha_bar at the zero-based timestep index (== alpha_bar(index + 1)).
  double alpha_bar_index(int index) const { return alpha_bar(index + 1); }

  const Vector& beta_array() const { return beta_; }
  const Vector& alpha_bar_array() const { return abar_; }

  double beta_start() const { return beta_[0]; }
  double beta_end() const { return beta_[steps_ - 1]; }

 private:
  int steps_ = 0;
  Vector beta_;  // beta_[i] is the level i+1 value
  Vector abar_;
};

/// One training minibatch of the forward process.
struct DiffusionBatch {
  Matrix x0;
  std::vector<int> t;  // noise levels in [1, steps]
  Matrix eps;
  Matrix xt;
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, rowwise. Levels in [0, T];
/// level 0 returns x0 unchanged.
Matrix forward_sample(const Matrix& x0, const std::vector<int>& t, const Matrix& eps,
                      const NoiseSchedule& schedule);

DiffusionBatch make_diffusion_batch(const Matrix& x0, const NoiseSchedule& schedule,
                                    RngStream& rng);

struct Teacher {
  ParamStore params;
  ParamStore ema_params;
  DenoiserArch arch;
  NoiseSchedule schedule;
};

struct DdpmLossResult {
  double loss = 0.0;
  Vector per_sample;
};

/// Mean over the batch of ||eps - eps_hat||^2 for a fixed (t, eps) draw;
/// optionally accumulates parameter gradients.
DdpmLossResult ddpm_loss_at(const ParamStore& params, const DenoiserArch& arch,
                            const NoiseSchedule& schedule, const DiffusionBatch& batch,
                            ParamStore* grads = nullptr);

/// Draws t uniform on [1, T] and eps ~ N(0, I), then evaluates the loss.
DdpmLossResult ddpm_loss(const Teacher& teacher, const Matrix& x0, RngStream& rng);

struct TeacherTrainConfig {
  int epochs = 40;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double ema_momentum = 0.999;
};

struct TeacherTrainResult {
  Teacher teacher;
  std::vector<double> epoch_loss;
};

/// Noise-prediction training on a zero-mean dataset; EMA weights maintained
/// throughout. Aborts with NumericalError on divergence.
TeacherTrainResult train_teacher(const DenoiserArch& arch, const NoiseSchedule& schedule,
                                 const LabeledDataset& data, const TeacherTrainConfig& config,
                                 RngStream& rng);

/// Reverse-process sampling from pure noise down to level 1, using the EMA
/// weights; no noise is added on the final step.
Matrix ancestral_sample(const Teacher& teacher, int n, RngStream& rng);

/// Checkpoint = parameter files plus a JSON sidecar holding arch + schedule.
void save_teacher(const Teacher& teacher, const std::string& dir);
Teacher load_teacher(const std::string& dir);

/// Timestep-indexed teacher features; implemented by the real teacher and by
/// synthetic constructions in tests.
class FeatureSource {
 public:
  virtual ~FeatureSource() = default;
  virtual int num_timesteps() const = 0;
  virtual int feature_dim() const = 0;
  /// Mid-block features of x conditioned on one zero-based timestep index
  /// per row; inputs are used as-is (no noise added).
  virtual Matrix features(const Matrix& x, const std::vector<int>& t) const = 0;
};

/// Mid-block features of the (frozen) EMA teacher.
class TeacherFeatureSource : public FeatureSource {
 public:
  explicit TeacherFeatureSource(const Teacher& teacher) : teacher_(teacher) {}
  int num_timesteps() const override { return teacher_.schedule.steps(); }
  int feature_dim() const override { return teacher_.arch.mid_width(); }
  Matrix features(const Matrix& x, const std::vector<int>& t) const override;

 private:
  const Teacher& teacher_;
};

}  // namespace diffrep
