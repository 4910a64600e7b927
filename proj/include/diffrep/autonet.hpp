#pragma once

#include "diffrep/numeric.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace diffrep {

/// Named parameter tensors, flattenable to a single vector in lexicographic
/// name order (the order is part of the serialization contract).
class ParamStore {
 public:
  using Map = std::map<std::string, Matrix>;

  void insert(const std::string& name, Matrix value);
  bool contains(const std::string& name) const;
  const Matrix& at(const std::string& name) const;
  Matrix& at(const std::string& name);

  std::size_t tensor_count() const { return tensors_.size(); }
  std::size_t total_size() const;

  Vector flatten() const;
  void unflatten(const Vector& flat);

  ParamStore zeros_like() const;
  /// this += a * other, matching tensors by name (shapes must agree).
  void axpy(double a, const ParamStore& other);
  void scale(double a);

  double squared_norm() const;
  double max_abs() const;

  Map::const_iterator begin() const { return tensors_.begin(); }
  Map::const_iterator end() const { return tensors_.end(); }
  Map::iterator begin() { return tensors_.begin(); }
  Map::iterator end() { return tensors_.end(); }

 private:
  Map tensors_;
};

void save_params(const ParamStore& params, const std::string& path);
ParamStore load_params(const std::string& path);

/// Scalar objective over a ParamStore with an exact reverse-mode gradient.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual double value(const ParamStore& params) const = 0;
  virtual ParamStore gradient(const ParamStore& params) const = 0;
};

/// Gradient entry point; validates that value and gradient are finite.
ParamStore grad(const Objective& loss, const ParamStore& params);

// ---------------------------------------------------------------------------
// Activations and elementary layers
// ---------------------------------------------------------------------------

Matrix silu(const Matrix& x);
Matrix silu_grad(const Matrix& x);  // derivative evaluated at pre-activation x

/// Sinusoidal embedding of an integer timestep; dim must be even.
/// Layout: [sin(t*w_0..w_{h-1}), cos(t*w_0..w_{h-1})].
Vector time_embedding(int t, int dim);
Matrix time_embedding_rows(const std::vector<int>& t, int dim);

// ---------------------------------------------------------------------------
// Plain MLP (SiLU hidden layers, linear output)
// ---------------------------------------------------------------------------

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
};

/// Kaiming-style fan-in uniform init; biases zero. Parameter names are
/// "<prefix>layerK.w/b" for hidden layers and "<prefix>out.w/b".
ParamStore mlp_init(const MlpSpec& spec, RngStream& rng, const std::string& prefix = "");

struct MlpTrace {
  std::vector<Matrix> pre;  // pre-activations per hidden layer
  std::vector<Matrix> act;  // SiLU outputs per hidden layer
  Matrix out;               // linear head output
};

MlpTrace mlp_forward(const ParamStore& params, const MlpSpec& spec, const Matrix& x,
                     const std::string& prefix = "");

/// Reverse pass. d_out is the gradient at the head output; optionally a
/// gradient d_tap can be injected at hidden activation `tap`. Gradients for
/// tensors outside this MLP's prefix are zero.
ParamStore mlp_backward(const ParamStore& params, const MlpSpec& spec, const Matrix& x,
                        const MlpTrace& trace, const Matrix& d_out, int tap = -1,
                        const Matrix* d_tap = nullptr, Matrix* d_input = nullptr,
                        const std::string& prefix = "");

// ---------------------------------------------------------------------------
// Time-conditioned denoiser with mid-block tap and optional self-attention
// ---------------------------------------------------------------------------

struct DenoiserArch {
  int input_dim = 0;
  std::vector<int> hidden;
  int time_embed_dim = 8;
  /// Hidden layer whose activation is the tapped feature; -1 selects the
  /// narrowest layer (deepest on ties).
  int mid_block = -1;
  bool attention = false;
  /// Tokens the input splits into when attention is enabled;
  /// token_count * token_dim() == input_dim.
  int token_count = 0;

  int resolved_mid() const;
  int mid_width() const;
  int token_dim() const;
  void validate() const;
};

ParamStore denoiser_init(const DenoiserArch& arch, RngStream& rng);

struct DenoiserTrace {
  Matrix x_in;      // input after the attention stage (== x when disabled)
  Matrix time_emb;  // n x time_embed_dim
  Matrix raw0;      // first layer pre-modulation
  Matrix gain0;     // 1 + E * embed.scale
  std::vector<Matrix> pre;
  std::vector<Matrix> act;
  Matrix eps_hat;
  Matrix attn_avg;   // tokens x tokens, rows sum to 1; empty when disabled
  Matrix attn_gain;  // 1 + E * attn.scale
  // per-sample attention intermediates, kept for the reverse pass
  std::vector<Matrix> attn_tokens, attn_q, attn_k, attn_v, attn_weights;

  const Matrix& z_mid(const DenoiserArch& arch) const {
    return act[static_cast<std::size_t>(arch.resolved_mid())];
  }
};

/// Forward pass; one timestep index in [0, arch range) per row of x.
DenoiserTrace denoiser_forward(const ParamStore& params, const DenoiserArch& arch,
                               const Matrix& x, const std::vector<int>& t);

/// Reverse pass accumulating parameter gradients from the output gradient
/// and (optionally) a gradient injected at the mid-block feature.
ParamStore denoiser_backward(const ParamStore& params, const DenoiserArch& arch,
                             const Matrix& x, const DenoiserTrace& trace,
                             const Matrix& d_eps, const Matrix* d_mid = nullptr);

// ---------------------------------------------------------------------------
// Losses and optimizers
// ---------------------------------------------------------------------------

/// Mean cross-entropy over the batch from raw logits. Optional outputs:
/// gradient w.r.t. logits (mean-reduced) and per-sample losses.
double cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                     Matrix* d_logits = nullptr, Vector* per_sample = nullptr);

double accuracy(const Matrix& logits, const std::vector<int>& labels);

struct SgdState {
  ParamStore velocity;
  bool initialized = false;
};

/// Momentum SGD with L2 regularization added to the gradient.
void sgd_step(ParamStore& params, const ParamStore& grads, double lr, double momentum,
              double weight_decay, SgdState& state);

/// ema <- m * ema + (1 - m) * params, elementwise.
void ema_update(ParamStore& ema, const ParamStore& params, double m);

}  // namespace diffrep
