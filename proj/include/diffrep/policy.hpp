#pragma once

#include "diffrep/autonet.hpp"
#include "diffrep/diffusion.hpp"
#include "diffrep/numeric.hpp"

#include <vector>

namespace diffrep {

/// Categorical policy over timestep indices {0, ..., T-1}; the forward pass
/// is deterministic, only sampling consumes randomness.
struct TimePolicy {
  MlpSpec spec;  // input -> hidden ... -> T logits
  ParamStore params;

  int actions() const { return spec.output_dim; }
};

TimePolicy make_policy(int input_dim, std::vector<int> hidden, int actions, RngStream& rng);

/// Decoder from teacher features to label logits (a single linear layer).
struct AuxDecoder {
  MlpSpec spec;
  ParamStore params;
};

AuxDecoder make_decoder(int feature_dim, int classes, RngStream& rng);

Matrix policy_logits(const TimePolicy& policy, const Matrix& x);

/// One categorical draw per row from softmax(logits(x)).
std::vector<int> sample_time(const TimePolicy& policy, const Matrix& x, RngStream& rng);

/// Per-sample reward: negative task cross-entropy of the decoder on the
/// teacher feature. Always <= 0; zero only for a perfect prediction.
Vector reward(const AuxDecoder& decoder, const Matrix& z_t, const std::vector<int>& y);

/// Mean per-sample entropy of the action distribution, in nats.
double entropy_bonus(const TimePolicy& policy, const Matrix& x);

/// Score-function estimate of the ascent gradient of
/// J = E[R * log pi(t|x)] + entropy_weight * H, from one sampled action and
/// reward per row. The entropy term is differentiated exactly.
ParamStore reinforce_grad(const TimePolicy& policy, const Matrix& x,
                          const std::vector<int>& t, const Vector& rewards,
                          double entropy_weight);

/// Exact ascent gradient of J = E[sum_t pi(t|x) R_x^t] + entropy_weight * H
/// by enumerating the whole action set; reward_table is n x T. Testing
/// oracle and small-T path.
ParamStore exact_grad(const TimePolicy& policy, const Matrix& x, const Matrix& reward_table,
                      double entropy_weight);

struct PolicyStepConfig {
  double policy_lr = 0.1;
  double decoder_lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double entropy_weight = 0.1;
  /// Optional moving-average reward baseline (off by default).
  bool reward_baseline = false;
  double baseline_momentum = 0.9;
};

struct RewardRecord {
  std::vector<int> chosen_t;
  Vector rewards;
  double mean_t = 0.0;
  double std_t = 0.0;
  double mean_reward = 0.0;
  double entropy = 0.0;
};

struct JointState {
  SgdState policy_opt;
  SgdState decoder_opt;
  double baseline = 0.0;
  bool baseline_ready = false;
};

/// One iteration: sample t per row, read teacher features, update the
/// decoder on the task loss and the policy on the reinforce estimate. The
/// rewards are evaluated with the decoder before its update; the teacher is
/// never touched.
RewardRecord joint_step(TimePolicy& policy, AuxDecoder& decoder, const FeatureSource& teacher,
                        const Matrix& x, const std::vector<int>& y,
                        const PolicyStepConfig& config, JointState& state, RngStream& rng);

}  // namespace diffrep
