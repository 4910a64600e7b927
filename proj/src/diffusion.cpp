#include "diffrep/diffusion.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace diffrep {

using nlohmann::json;

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 2) {
    throw std::invalid_argument("schedule: need at least 2 steps");
  }
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.steps_ = steps;
  s.beta_.resize(steps);
  s.abar_.resize(steps);
  double acc = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double frac = static_cast<double>(i) / static_cast<double>(steps - 1);
    s.beta_[i] = beta_start + frac * (beta_end - beta_start);
    acc *= 1.0 - s.beta_[i];
    s.abar_[i] = acc;
  }
  return s;
}

double NoiseSchedule::beta(int level) const {
  if (level < 1 || level > steps_) {
    throw std::invalid_argument("schedule: beta level out of range");
  }
  return beta_[level - 1];
}

double NoiseSchedule::alpha(int level) const { return 1.0 - beta(level); }

double NoiseSchedule::alpha_bar(int level) const {
  if (level < 0 || level > steps_) {
    throw std::invalid_argument("schedule: alpha_bar level out of range");
  }
  return level == 0 ? 1.0 : abar_[level - 1];
}

Matrix forward_sample(const Matrix& x0, const std::vector<int>& t, const Matrix& eps,
                      const NoiseSchedule& schedule) {
  if (static_cast<Eigen::Index>(t.size()) != x0.rows() || eps.rows() != x0.rows() ||
      eps.cols() != x0.cols()) {
    throw std::invalid_argument("forward_sample: shape mismatch");
  }
  Matrix xt(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    const double abar = schedule.alpha_bar(t[static_cast<std::size_t>(i)]);
    xt.row(i) = std::sqrt(abar) * x0.row(i) + std::sqrt(1.0 - abar) * eps.row(i);
  }
  return xt;
}

DiffusionBatch make_diffusion_batch(const Matrix& x0, const NoiseSchedule& schedule,
                                    RngStream& rng) {
  DiffusionBatch batch;
  batch.x0 = x0;
  batch.t.resize(static_cast<std::size_t>(x0.rows()));
  for (auto& level : batch.t) {
    level = static_cast<int>(rng.uniform_int(1, schedule.steps() + 1));
  }
  batch.eps = standard_normal(rng, static_cast<int>(x0.rows()), static_cast<int>(x0.cols()));
  batch.xt = forward_sample(x0, batch.t, batch.eps, schedule);
  return batch;
}

DdpmLossResult ddpm_loss_at(const ParamStore& params, const DenoiserArch& arch,
                            const NoiseSchedule& schedule, const DiffusionBatch& batch,
                            ParamStore* grads) {
  if (batch.x0.rows() == 0) {
    throw std::invalid_argument("ddpm_loss: empty batch");
  }
  std::vector<int> t_index(batch.t.size());
  for (std::size_t i = 0; i < batch.t.size(); ++i) {
    if (batch.t[i] < 1 || batch.t[i] > schedule.steps()) {
      throw std::invalid_argument("ddpm_loss: level out of range");
    }
    t_index[i] = batch.t[i] - 1;
  }
  const DenoiserTrace trace = denoiser_forward(params, arch, batch.xt, t_index);
  const Matrix diff = trace.eps_hat - batch.eps;
  DdpmLossResult result;
  result.per_sample = diff.rowwise().squaredNorm();
  result.loss = result.per_sample.mean();
  if (grads != nullptr) {
    const Matrix d_eps = 2.0 * diff / static_cast<double>(batch.x0.rows());
    *grads = denoiser_backward(params, arch, batch.xt, trace, d_eps);
  }
  return result;
}

DdpmLossResult ddpm_loss(const Teacher& teacher, const Matrix& x0, RngStream& rng) {
  const DiffusionBatch batch = make_diffusion_batch(x0, teacher.schedule, rng);
  return ddpm_loss_at(teacher.params, teacher.arch, teacher.schedule, batch);
}

TeacherTrainResult train_teacher(const DenoiserArch& arch, const NoiseSchedule& schedule,
                                 const LabeledDataset& data, const TeacherTrainConfig& config,
                                 RngStream& rng) {
  arch.validate();
  if (arch.input_dim != data.dim()) {
    throw std::invalid_argument("train_teacher: dataset width must match arch input");
  }
  if (config.epochs < 0 || config.batch_size < 1) {
    throw std::invalid_argument("train_teacher: bad epoch/batch config");
  }

  TeacherTrainResult result;
  result.teacher.arch = arch;
  result.teacher.schedule = schedule;
  result.teacher.params = denoiser_init(arch, rng);
  result.teacher.ema_params = result.teacher.params;

  SgdState opt_state;
  const int n = data.size();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = rng.permutation(n);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int stop = std::min(n, start + config.batch_size);
      Matrix xb(stop - start, data.dim());
      for (int i = start; i < stop; ++i) {
        xb.row(i - start) = data.x.row(order[static_cast<std::size_t>(i)]);
      }
      const DiffusionBatch batch = make_diffusion_batch(xb, schedule, rng);
      ParamStore grads;
      const DdpmLossResult loss =
          ddpm_loss_at(result.teacher.params, arch, schedule, batch, &grads);
      if (!std::isfinite(loss.loss)) {
        throw NumericalError("train_teacher: loss diverged at epoch " + std::to_string(epoch));
      }
      sgd_step(result.teacher.params, grads, config.lr, config.momentum,
               config.weight_decay, opt_state);
      ema_update(result.teacher.ema_params, result.teacher.params, config.ema_momentum);
      epoch_loss += loss.loss;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / std::max(1, batches));
  }
  return result;
}

Matrix ancestral_sample(const Teacher& teacher, int n, RngStream& rng) {
  const NoiseSchedule& sched = teacher.schedule;
  Matrix x = standard_normal(rng, n, teacher.arch.input_dim);
  for (int level = sched.steps(); level >= 1; --level) {
    const std::vector<int> t_index(static_cast<std::size_t>(n), level - 1);
    const DenoiserTrace trace =
        denoiser_forward(teacher.ema_params, teacher.arch, x, t_index);
    const double beta = sched.beta(level);
    const double abar = sched.alpha_bar(level);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    x = inv_sqrt_alpha * (x - (beta / std::sqrt(1.0 - abar)) * trace.eps_hat);
    if (level > 1) {
      x += std::sqrt(beta) * standard_normal(rng, n, teacher.arch.input_dim);
    }
  }
  return x;
}

void save_teacher(const Teacher& teacher, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir);
  save_params(teacher.params, (base / "teacher_params.bin").string());
  save_params(teacher.ema_params, (base / "teacher_ema.bin").string());

  json sidecar;
  sidecar["arch"] = {{"input_dim", teacher.arch.input_dim},
                     {"hidden", teacher.arch.hidden},
                     {"time_embed_dim", teacher.arch.time_embed_dim},
                     {"mid_block", teacher.arch.mid_block},
                     {"attention", teacher.arch.attention},
                     {"token_count", teacher.arch.token_count}};
  sidecar["schedule"] = {{"steps", teacher.schedule.steps()},
                         {"beta_start", teacher.schedule.beta_start()},
                         {"beta_end", teacher.schedule.beta_end()}};
  std::ofstream out(base / "teacher.json", std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write teacher sidecar in '" + dir + "'");
  }
  out << sidecar.dump(2) << "\n";
}

Teacher load_teacher(const std::string& dir) {
  const auto base = std::filesystem::path(dir);
  std::ifstream in(base / "teacher.json");
  if (!in) {
    throw std::runtime_error("missing teacher checkpoint in '" + dir + "'");
  }
  json sidecar;
  in >> sidecar;

  Teacher teacher;
  const auto& arch = sidecar.at("arch");
  teacher.arch.input_dim = arch.at("input_dim").get<int>();
  teacher.arch.hidden = arch.at("hidden").get<std::vector<int>>();
  teacher.arch.time_embed_dim = arch.at("time_embed_dim").get<int>();
  teacher.arch.mid_block = arch.at("mid_block").get<int>();
  teacher.arch.attention = arch.at("attention").get<bool>();
  teacher.arch.token_count = arch.at("token_count").get<int>();
  const auto& sched = sidecar.at("schedule");
  teacher.schedule = NoiseSchedule::linear(sched.at("steps").get<int>(),
                                           sched.at("beta_start").get<double>(),
                                           sched.at("beta_end").get<double>());
  teacher.params = load_params((base / "teacher_params.bin").string());
  teacher.ema_params = load_params((base / "teacher_ema.bin").string());
  return teacher;
}

Matrix TeacherFeatureSource::features(const Matrix& x, const std::vector<int>& t) const {
  for (int index : t) {
    if (index < 0 || index >= teacher_.schedule.steps()) {
      throw std::invalid_argument("feature source: timestep index out of range");
    }
  }
  const DenoiserTrace trace = denoiser_forward(teacher_.ema_params, teacher_.arch, x, t);
  return trace.z_mid(teacher_.arch);
}

}  // namespace diffrep
