#include "diffrep/policy.hpp"

#include <cmath>

namespace diffrep {

namespace {

// d(mean entropy)/d(logits) for one row: -p_j * (log p_j + H) / n.
Eigen::RowVectorXd entropy_logit_grad(const Eigen::RowVectorXd& probs) {
  double h = 0.0;
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    if (probs[j] > 0.0) {
      h -= probs[j] * std::log(probs[j]);
    }
  }
  Eigen::RowVectorXd grad(probs.size());
  for (Eigen::Index j = 0; j < probs.size(); ++j) {
    grad[j] = probs[j] > 0.0 ? -probs[j] * (std::log(probs[j]) + h) : 0.0;
  }
  return grad;
}

}  // namespace

TimePolicy make_policy(int input_dim, std::vector<int> hidden, int actions, RngStream& rng) {
  if (actions < 2) {
    throw std::invalid_argument("policy: need at least 2 actions");
  }
  TimePolicy policy;
  policy.spec = MlpSpec{input_dim, std::move(hidden), actions};
  policy.params = mlp_init(policy.spec, rng);
  return policy;
}

AuxDecoder make_decoder(int feature_dim, int classes, RngStream& rng) {
  if (classes < 2) {
    throw std::invalid_argument("decoder: need at least 2 classes");
  }
  AuxDecoder decoder;
  decoder.spec = MlpSpec{feature_dim, {}, classes};
  decoder.params = mlp_init(decoder.spec, rng);
  return decoder;
}

Matrix policy_logits(const TimePolicy& policy, const Matrix& x) {
  return mlp_forward(policy.params, policy.spec, x).out;
}

std::vector<int> sample_time(const TimePolicy& policy, const Matrix& x, RngStream& rng) {
  const Matrix probs = softmax_rows(policy_logits(policy, x));
  std::vector<int> t(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    t[static_cast<std::size_t>(i)] = rng.categorical(probs.row(i).transpose());
  }
  return t;
}

Vector reward(const AuxDecoder& decoder, const Matrix& z_t, const std::vector<int>& y) {
  const MlpTrace trace = mlp_forward(decoder.params, decoder.spec, z_t);
  Vector per_sample;
  cross_entropy(trace.out, y, nullptr, &per_sample);
  return -per_sample;
}

double entropy_bonus(const TimePolicy& policy, const Matrix& x) {
  const Matrix probs = softmax_rows(policy_logits(policy, x));
  double total = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
      if (probs(i, j) > 0.0) {
        total -= probs(i, j) * std::log(probs(i, j));
      }
    }
  }
  return total / static_cast<double>(probs.rows());
}

ParamStore reinforce_grad(const TimePolicy& policy, const Matrix& x,
                          const std::vector<int>& t, const Vector& rewards,
                          double entropy_weight) {
  const Eigen::Index n = x.rows();
  if (static_cast<Eigen::Index>(t.size()) != n || rewards.size() != n) {
    throw std::invalid_argument("reinforce_grad: one action and reward per row required");
  }
  if (!rewards.allFinite()) {
    throw NumericalError("reinforce_grad: non-finite reward");
  }
  const MlpTrace trace = mlp_forward(policy.params, policy.spec, x);
  const Matrix probs = softmax_rows(trace.out);

  Matrix d_logits(n, policy.actions());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int action = t[static_cast<std::size_t>(i)];
    if (action < 0 || action >= policy.actions()) {
      throw std::invalid_argument("reinforce_grad: action out of range");
    }
    // R * d(log pi(t|x))/d(logits) = R * (onehot(t) - pi).
    Eigen::RowVectorXd row = -rewards[i] * probs.row(i);
    row[action] += rewards[i];
    d_logits.row(i) =
        (row + entropy_weight * entropy_logit_grad(probs.row(i))) / static_cast<double>(n);
  }
  return mlp_backward(policy.params, policy.spec, x, trace, d_logits);
}

ParamStore exact_grad(const TimePolicy& policy, const Matrix& x, const Matrix& reward_table,
                      double entropy_weight) {
  const Eigen::Index n = x.rows();
  if (reward_table.rows() != n || reward_table.cols() != policy.actions()) {
    throw std::invalid_argument("exact_grad: reward table must be batch x actions");
  }
  if (!reward_table.allFinite()) {
    throw NumericalError("exact_grad: non-finite reward table");
  }
  const MlpTrace trace = mlp_forward(policy.params, policy.spec, x);
  const Matrix probs = softmax_rows(trace.out);

  Matrix d_logits(n, policy.actions());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double expected = probs.row(i).dot(reward_table.row(i));
    // d(sum_t pi_t R_t)/d(logit_j) = pi_j (R_j - sum_t pi_t R_t).
    const Eigen::RowVectorXd centered = reward_table.row(i).array() - expected;
    const Eigen::RowVectorXd reward_term = probs.row(i).cwiseProduct(centered);
    d_logits.row(i) =
        (reward_term + entropy_weight * entropy_logit_grad(probs.row(i))) /
        static_cast<double>(n);
  }
  return mlp_backward(policy.params, policy.spec, x, trace, d_logits);
}

RewardRecord joint_step(TimePolicy& policy, AuxDecoder& decoder, const FeatureSource& teacher,
                        const Matrix& x, const std::vector<int>& y,
                        const PolicyStepConfig& config, JointState& state, RngStream& rng) {
  if (policy.actions() != teacher.num_timesteps()) {
    throw std::invalid_argument("joint_step: policy action count must equal the schedule");
  }
  RewardRecord record;
  record.chosen_t = sample_time(policy, x, rng);
  const Matrix z = teacher.features(x, record.chosen_t);

  // Task loss on the current decoder; the same forward supplies both the
  // rewards and the decoder gradient.
  const MlpTrace dec_trace = mlp_forward(decoder.params, decoder.spec, z);
  Matrix d_logits;
  Vector per_sample;
  cross_entropy(dec_trace.out, y, &d_logits, &per_sample);
  record.rewards = -per_sample;

  ParamStore dec_grads =
      mlp_backward(decoder.params, decoder.spec, z, dec_trace, d_logits);
  sgd_step(decoder.params, dec_grads, config.decoder_lr, config.momentum,
           config.weight_decay, state.decoder_opt);

  Vector advantage = record.rewards;
  if (config.reward_baseline) {
    const double batch_mean = record.rewards.mean();
    state.baseline = state.baseline_ready
                         ? config.baseline_momentum * state.baseline +
                               (1.0 - config.baseline_momentum) * batch_mean
                         : batch_mean;
    state.baseline_ready = true;
    advantage.array() -= state.baseline;
  }
  ParamStore ascent =
      reinforce_grad(policy, x, record.chosen_t, advantage, config.entropy_weight);
  ascent.scale(-1.0);  // maximize J with a minimizing optimizer
  sgd_step(policy.params, ascent, config.policy_lr, config.momentum, config.weight_decay,
           state.policy_opt);

  double mean_t = 0.0;
  for (int t : record.chosen_t) {
    mean_t += static_cast<double>(t);
  }
  mean_t /= static_cast<double>(record.chosen_t.size());
  double var_t = 0.0;
  for (int t : record.chosen_t) {
    var_t += (t - mean_t) * (t - mean_t);
  }
  record.mean_t = mean_t;
  record.std_t = std::sqrt(var_t / static_cast<double>(record.chosen_t.size()));
  record.mean_reward = record.rewards.mean();
  record.entropy = entropy_bonus(policy, x);
  return record;
}

}  // namespace diffrep
