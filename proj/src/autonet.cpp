#include "diffrep/autonet.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace diffrep {

namespace {

using nlohmann::json;

std::string layer_name(const std::string& prefix, int k, const char* which) {
  return prefix + "layer" + std::to_string(k) + "." + which;
}

Matrix uniform_fan_in(RngStream& rng, int rows, int cols) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows));
  Matrix w(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      w(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    }
  }
  return w;
}

void check_same_shape(const Matrix& a, const Matrix& b, const std::string& name) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument("shape mismatch for tensor '" + name + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

void ParamStore::insert(const std::string& name, Matrix value) {
  if (tensors_.count(name) != 0) {
    throw std::invalid_argument("duplicate tensor name '" + name + "'");
  }
  tensors_.emplace(name, std::move(value));
}

bool ParamStore::contains(const std::string& name) const {
  return tensors_.count(name) != 0;
}

const Matrix& ParamStore::at(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) {
    throw std::invalid_argument("unknown tensor '" + name + "'");
  }
  return it->second;
}

Matrix& ParamStore::at(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) {
    throw std::invalid_argument("unknown tensor '" + name + "'");
  }
  return it->second;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors_) {
    n += static_cast<std::size_t>(m.size());
  }
  return n;
}

Vector ParamStore::flatten() const {
  Vector flat(static_cast<Eigen::Index>(total_size()));
  Eigen::Index pos = 0;
  for (const auto& [name, m] : tensors_) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        flat[pos++] = m(r, c);
      }
    }
  }
  return flat;
}

void ParamStore::unflatten(const Vector& flat) {
  if (flat.size() != static_cast<Eigen::Index>(total_size())) {
    throw std::invalid_argument("unflatten: length mismatch");
  }
  Eigen::Index pos = 0;
  for (auto& [name, m] : tensors_) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        m(r, c) = flat[pos++];
      }
    }
  }
}

ParamStore ParamStore::zeros_like() const {
  ParamStore z;
  for (const auto& [name, m] : tensors_) {
    z.insert(name, Matrix::Zero(m.rows(), m.cols()));
  }
  return z;
}

void ParamStore::axpy(double a, const ParamStore& other) {
  if (other.tensors_.size() != tensors_.size()) {
    throw std::invalid_argument("axpy: tensor sets differ");
  }
  auto it = tensors_.begin();
  for (const auto& [name, m] : other.tensors_) {
    if (it->first != name) {
      throw std::invalid_argument("axpy: tensor sets differ at '" + name + "'");
    }
    check_same_shape(it->second, m, name);
    it->second += a * m;
    ++it;
  }
}

void ParamStore::scale(double a) {
  for (auto& [name, m] : tensors_) {
    m *= a;
  }
}

double ParamStore::squared_norm() const {
  double s = 0.0;
  for (const auto& [name, m] : tensors_) {
    s += m.squaredNorm();
  }
  return s;
}

double ParamStore::max_abs() const {
  double s = 0.0;
  for (const auto& [name, m] : tensors_) {
    if (m.size() > 0) {
      s = std::max(s, m.cwiseAbs().maxCoeff());
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Serialization: [u64 header bytes][JSON header][row-major f64 payload]
// ---------------------------------------------------------------------------

void save_params(const ParamStore& params, const std::string& path) {
  json header;
  header["format"] = "diffrep-params";
  header["version"] = 1;
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : params) {
    tensors.push_back({{"name", name},
                       {"rows", m.rows()},
                       {"cols", m.cols()},
                       {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(double);
  }
  header["tensors"] = std::move(tensors);
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, m] : params) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    }
  }
  if (!out) {
    throw std::runtime_error("write failed for '" + path + "'");
  }
}

ParamStore load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open '" + path + "'");
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) {
    throw std::runtime_error("truncated parameter file '" + path + "'");
  }
  const json header = json::parse(header_str);
  if (header.at("format") != "diffrep-params") {
    throw std::runtime_error("'" + path + "' is not a parameter file");
  }

  const std::streampos payload_start = in.tellg();
  ParamStore params;
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name");
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    Matrix m(rows, cols);
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        double v = 0.0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        m(r, c) = v;
      }
    }
    if (!in) {
      throw std::runtime_error("truncated payload in '" + path + "'");
    }
    params.insert(name, std::move(m));
  }
  return params;
}

ParamStore grad(const Objective& loss, const ParamStore& params) {
  require_finite(loss.value(params), "objective value");
  ParamStore g = loss.gradient(params);
  for (const auto& [name, m] : g) {
    require_finite(m, "gradient of '" + name + "'");
  }
  return g;
}

// ---------------------------------------------------------------------------
// Activations and embeddings
// ---------------------------------------------------------------------------

Matrix silu(const Matrix& x) {
  return x.array() / (1.0 + (-x.array()).exp());
}

Matrix silu_grad(const Matrix& x) {
  const auto s = 1.0 / (1.0 + (-x.array()).exp());
  return s * (1.0 + x.array() * (1.0 - s));
}

Vector time_embedding(int t, int dim) {
  if (dim < 2 || dim % 2 != 0) {
    throw std::invalid_argument("time_embedding: dim must be even and >= 2");
  }
  const int half = dim / 2;
  const double denom = std::max(half - 1, 1);
  Vector emb(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / denom);
    emb[i] = std::sin(t * freq);
    emb[half + i] = std::cos(t * freq);
  }
  return emb;
}

Matrix time_embedding_rows(const std::vector<int>& t, int dim) {
  Matrix emb(static_cast<Eigen::Index>(t.size()), dim);
  for (std::size_t i = 0; i < t.size(); ++i) {
    emb.row(static_cast<Eigen::Index>(i)) = time_embedding(t[i], dim).transpose();
  }
  return emb;
}

// ---------------------------------------------------------------------------
// MLP
// ---------------------------------------------------------------------------

ParamStore mlp_init(const MlpSpec& spec, RngStream& rng, const std::string& prefix) {
  if (spec.input_dim < 1 || spec.output_dim < 1) {
    throw std::invalid_argument("mlp_init: invalid dimensions");
  }
  ParamStore params;
  int fan_in = spec.input_dim;
  for (std::size_t k = 0; k < spec.hidden.size(); ++k) {
    const int width = spec.hidden[k];
    params.insert(layer_name(prefix, static_cast<int>(k), "w"),
                  uniform_fan_in(rng, fan_in, width));
    params.insert(layer_name(prefix, static_cast<int>(k), "b"), Matrix::Zero(1, width));
    fan_in = width;
  }
  params.insert(prefix + "out.w", uniform_fan_in(rng, fan_in, spec.output_dim));
  params.insert(prefix + "out.b", Matrix::Zero(1, spec.output_dim));
  return params;
}

MlpTrace mlp_forward(const ParamStore& params, const MlpSpec& spec, const Matrix& x,
                     const std::string& prefix) {
  if (x.cols() != spec.input_dim) {
    throw std::invalid_argument("mlp_forward: input width mismatch");
  }
  MlpTrace trace;
  const Matrix* h = &x;
  for (std::size_t k = 0; k < spec.hidden.size(); ++k) {
    const Matrix& w = params.at(layer_name(prefix, static_cast<int>(k), "w"));
    const Matrix& b = params.at(layer_name(prefix, static_cast<int>(k), "b"));
    Matrix pre = (*h) * w;
    pre.rowwise() += b.row(0);
    require_finite(pre, "mlp layer " + std::to_string(k));
    trace.pre.push_back(std::move(pre));
    trace.act.push_back(silu(trace.pre.back()));
    h = &trace.act.back();
  }
  trace.out = (*h) * params.at(prefix + "out.w");
  trace.out.rowwise() += params.at(prefix + "out.b").row(0);
  require_finite(trace.out, "mlp output layer");
  return trace;
}

ParamStore mlp_backward(const ParamStore& params, const MlpSpec& spec, const Matrix& x,
                        const MlpTrace& trace, const Matrix& d_out, int tap,
                        const Matrix* d_tap, Matrix* d_input, const std::string& prefix) {
  ParamStore grads = params.zeros_like();
  const int layers = static_cast<int>(spec.hidden.size());
  const Matrix& last = layers > 0 ? trace.act.back() : x;

  grads.at(prefix + "out.w") = last.transpose() * d_out;
  grads.at(prefix + "out.b") = d_out.colwise().sum();
  Matrix h_grad = d_out * params.at(prefix + "out.w").transpose();

  for (int k = layers - 1; k >= 0; --k) {
    if (k == tap && d_tap != nullptr) {
      h_grad += *d_tap;
    }
    const Matrix d_pre = h_grad.array() * silu_grad(trace.pre[static_cast<std::size_t>(k)]).array();
    const Matrix& below = k > 0 ? trace.act[static_cast<std::size_t>(k - 1)] : x;
    grads.at(layer_name(prefix, k, "w")) = below.transpose() * d_pre;
    grads.at(layer_name(prefix, k, "b")) = d_pre.colwise().sum();
    h_grad = d_pre * params.at(layer_name(prefix, k, "w")).transpose();
  }
  if (d_input != nullptr) {
    *d_input = h_grad;
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Denoiser
// ---------------------------------------------------------------------------

int DenoiserArch::resolved_mid() const {
  if (mid_block >= 0) {
    return mid_block;
  }
  int best = 0;
  for (std::size_t k = 1; k < hidden.size(); ++k) {
    if (hidden[k] <= hidden[static_cast<std::size_t>(best)]) {
      best = static_cast<int>(k);
    }
  }
  return best;
}

int DenoiserArch::mid_width() const {
  return hidden[static_cast<std::size_t>(resolved_mid())];
}

int DenoiserArch::token_dim() const {
  return token_count > 0 ? input_dim / token_count : 0;
}

void DenoiserArch::validate() const {
  if (input_dim < 1) {
    throw std::invalid_argument("denoiser arch: input_dim must be >= 1");
  }
  if (hidden.empty()) {
    throw std::invalid_argument("denoiser arch: at least one hidden layer required");
  }
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
    throw std::invalid_argument("denoiser arch: time_embed_dim must be even and >= 2");
  }
  if (mid_block >= static_cast<int>(hidden.size())) {
    throw std::invalid_argument("denoiser arch: mid_block out of range");
  }
  if (attention) {
    if (token_count < 1 || input_dim % token_count != 0) {
      throw std::invalid_argument(
          "denoiser arch: token_count must divide input_dim when attention is enabled");
    }
  }
}

ParamStore denoiser_init(const DenoiserArch& arch, RngStream& rng) {
  arch.validate();
  ParamStore params;
  if (arch.attention) {
    const int c = arch.token_dim();
    params.insert("attn.wq", uniform_fan_in(rng, c, c));
    params.insert("attn.wk", uniform_fan_in(rng, c, c));
    params.insert("attn.wv", uniform_fan_in(rng, c, c));
    // Timestep modulation of the token stream, so attention patterns can
    // change with the noise level.
    params.insert("attn.scale", Matrix::Zero(arch.time_embed_dim, arch.input_dim));
    params.insert("attn.shift", Matrix::Zero(arch.time_embed_dim, arch.input_dim));
  }
  int fan_in = arch.input_dim;
  for (std::size_t k = 0; k < arch.hidden.size(); ++k) {
    params.insert(layer_name("", static_cast<int>(k), "w"),
                  uniform_fan_in(rng, fan_in, arch.hidden[k]));
    params.insert(layer_name("", static_cast<int>(k), "b"), Matrix::Zero(1, arch.hidden[k]));
    fan_in = arch.hidden[k];
  }
  // Scale-and-shift conditioning on the first hidden layer; zero init makes
  // the network time-independent at step 0.
  params.insert("embed.scale", Matrix::Zero(arch.time_embed_dim, arch.hidden[0]));
  params.insert("embed.shift", Matrix::Zero(arch.time_embed_dim, arch.hidden[0]));
  params.insert("out.w", uniform_fan_in(rng, fan_in, arch.input_dim));
  params.insert("out.b", Matrix::Zero(1, arch.input_dim));
  // Linear input-to-output skip around the trunk. At high noise the optimal
  // predictor is mostly a rescaled passthrough; the skip carries it so the
  // trunk is free to specialize on data structure.
  params.insert("skip.w", Matrix::Zero(arch.input_dim, arch.input_dim));
  return params;
}

DenoiserTrace denoiser_forward(const ParamStore& params, const DenoiserArch& arch,
                               const Matrix& x, const std::vector<int>& t) {
  arch.validate();
  if (x.cols() != arch.input_dim) {
    throw std::invalid_argument("denoiser_forward: input width mismatch");
  }
  if (static_cast<Eigen::Index>(t.size()) != x.rows()) {
    throw std::invalid_argument("denoiser_forward: one timestep per row required");
  }
  require_finite(x, "denoiser input");

  DenoiserTrace trace;
  const Eigen::Index n = x.rows();
  trace.time_emb = time_embedding_rows(t, arch.time_embed_dim);

  if (arch.attention) {
    const int m = arch.token_count;
    const int c = arch.token_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(c));
    const Matrix& wq = params.at("attn.wq");
    const Matrix& wk = params.at("attn.wk");
    const Matrix& wv = params.at("attn.wv");
    trace.attn_gain = (trace.time_emb * params.at("attn.scale")).array() + 1.0;
    const Matrix x_mod =
        x.cwiseProduct(trace.attn_gain) + trace.time_emb * params.at("attn.shift");
    trace.x_in.resize(n, arch.input_dim);
    trace.attn_avg = Matrix::Zero(m, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      Matrix tokens(m, c);
      for (int r = 0; r < m; ++r) {
        tokens.row(r) = x_mod.row(i).segment(r * c, c);
      }
      Matrix q = tokens * wq;
      Matrix k = tokens * wk;
      Matrix v = tokens * wv;
      Matrix attn = softmax_rows(scale * (q * k.transpose()));
      Matrix mixed = tokens + attn * v;
      for (int r = 0; r < m; ++r) {
        trace.x_in.row(i).segment(r * c, c) = mixed.row(r);
      }
      trace.attn_avg += attn;
      trace.attn_tokens.push_back(std::move(tokens));
      trace.attn_q.push_back(std::move(q));
      trace.attn_k.push_back(std::move(k));
      trace.attn_v.push_back(std::move(v));
      trace.attn_weights.push_back(std::move(attn));
    }
    trace.attn_avg /= static_cast<double>(n);
    require_finite(trace.x_in, "denoiser attention stage");
  } else {
    trace.x_in = x;
  }

  // pre0 = (x W + b) .* (1 + E S) + E H, so the timestep can rescale the
  // first hidden layer, not just shift it.
  Matrix raw0 = trace.x_in * params.at("layer0.w");
  raw0.rowwise() += params.at("layer0.b").row(0);
  const Matrix gain =
      (trace.time_emb * params.at("embed.scale")).array() + 1.0;
  Matrix pre0 =
      raw0.cwiseProduct(gain) + trace.time_emb * params.at("embed.shift");
  require_finite(pre0, "denoiser layer 0");
  trace.raw0 = std::move(raw0);
  trace.gain0 = gain;
  trace.pre.push_back(std::move(pre0));
  trace.act.push_back(silu(trace.pre.back()));

  for (std::size_t k = 1; k < arch.hidden.size(); ++k) {
    Matrix pre = trace.act.back() * params.at(layer_name("", static_cast<int>(k), "w"));
    pre.rowwise() += params.at(layer_name("", static_cast<int>(k), "b")).row(0);
    require_finite(pre, "denoiser layer " + std::to_string(k));
    trace.pre.push_back(std::move(pre));
    trace.act.push_back(silu(trace.pre.back()));
  }

  trace.eps_hat = trace.act.back() * params.at("out.w") + trace.x_in * params.at("skip.w");
  trace.eps_hat.rowwise() += params.at("out.b").row(0);
  require_finite(trace.eps_hat, "denoiser output layer");
  return trace;
}

ParamStore denoiser_backward(const ParamStore& params, const DenoiserArch& arch,
                             const Matrix& x, const DenoiserTrace& trace,
                             const Matrix& d_eps, const Matrix* d_mid) {
  if (d_eps.rows() != x.rows() || d_eps.cols() != arch.input_dim) {
    throw std::invalid_argument("denoiser_backward: output gradient shape mismatch");
  }
  ParamStore grads = params.zeros_like();
  const int layers = static_cast<int>(arch.hidden.size());
  const int mid = arch.resolved_mid();

  grads.at("out.w") = trace.act.back().transpose() * d_eps;
  grads.at("out.b") = d_eps.colwise().sum();
  grads.at("skip.w") = trace.x_in.transpose() * d_eps;
  Matrix h_grad = d_eps * params.at("out.w").transpose();

  for (int k = layers - 1; k >= 0; --k) {
    if (k == mid && d_mid != nullptr) {
      h_grad += *d_mid;
    }
    const Matrix d_pre =
        h_grad.array() * silu_grad(trace.pre[static_cast<std::size_t>(k)]).array();
    if (k > 0) {
      grads.at(layer_name("", k, "w")) =
          trace.act[static_cast<std::size_t>(k - 1)].transpose() * d_pre;
      grads.at(layer_name("", k, "b")) = d_pre.colwise().sum();
      h_grad = d_pre * params.at(layer_name("", k, "w")).transpose();
    } else {
      const Matrix d_raw = d_pre.cwiseProduct(trace.gain0);
      grads.at("layer0.w") = trace.x_in.transpose() * d_raw;
      grads.at("layer0.b") = d_raw.colwise().sum();
      grads.at("embed.scale") =
          trace.time_emb.transpose() * d_pre.cwiseProduct(trace.raw0);
      grads.at("embed.shift") = trace.time_emb.transpose() * d_pre;
      h_grad = d_raw * params.at("layer0.w").transpose();
    }
  }

  if (arch.attention) {
    const int m = arch.token_count;
    const int c = arch.token_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(c));
    const Matrix& wq = params.at("attn.wq");
    const Matrix& wk = params.at("attn.wk");
    const Matrix& wv = params.at("attn.wv");
    // Gradient at the attention output: trunk path plus the output skip.
    const Matrix d_x_in = h_grad + d_eps * params.at("skip.w").transpose();
    Matrix d_wq = Matrix::Zero(c, c), d_wk = Matrix::Zero(c, c), d_wv = Matrix::Zero(c, c);
    Matrix d_x_mod(x.rows(), arch.input_dim);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto idx = static_cast<std::size_t>(i);
      Matrix d_mixed(m, c);
      for (int r = 0; r < m; ++r) {
        d_mixed.row(r) = d_x_in.row(i).segment(r * c, c);
      }
      const Matrix& tokens = trace.attn_tokens[idx];
      const Matrix& attn = trace.attn_weights[idx];
      const Matrix d_attn = d_mixed * trace.attn_v[idx].transpose();
      const Matrix d_v = attn.transpose() * d_mixed;
      Matrix d_scores(m, m);
      for (int r = 0; r < m; ++r) {
        const double dot = d_attn.row(r).dot(attn.row(r));
        d_scores.row(r) = attn.row(r).array() * (d_attn.row(r).array() - dot);
      }
      const Matrix d_q = scale * d_scores * trace.attn_k[idx];
      const Matrix d_k = scale * d_scores.transpose() * trace.attn_q[idx];
      d_wq += tokens.transpose() * d_q;
      d_wk += tokens.transpose() * d_k;
      d_wv += tokens.transpose() * d_v;
      // Residual plus the three projection paths back to the tokens.
      const Matrix d_tokens =
          d_mixed + d_q * wq.transpose() + d_k * wk.transpose() + d_v * wv.transpose();
      for (int r = 0; r < m; ++r) {
        d_x_mod.row(i).segment(r * c, c) = d_tokens.row(r);
      }
    }
    grads.at("attn.wq") = d_wq;
    grads.at("attn.wk") = d_wk;
    grads.at("attn.wv") = d_wv;
    grads.at("attn.scale") = trace.time_emb.transpose() * d_x_mod.cwiseProduct(x);
    grads.at("attn.shift") = trace.time_emb.transpose() * d_x_mod;
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Losses and optimizers
// ---------------------------------------------------------------------------

double cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                     Matrix* d_logits, Vector* per_sample) {
  const Eigen::Index n = logits.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n || n == 0) {
    throw std::invalid_argument("cross_entropy: one label per row required");
  }
  for (int y : labels) {
    if (y < 0 || y >= logits.cols()) {
      throw std::invalid_argument("cross_entropy: label out of range");
    }
  }
  require_finite(logits, "cross_entropy logits");

  Vector losses(n);
  Matrix probs = softmax_rows(logits);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    losses[i] = lse - logits(i, labels[static_cast<std::size_t>(i)]);
  }
  if (d_logits != nullptr) {
    *d_logits = probs / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      (*d_logits)(i, labels[static_cast<std::size_t>(i)]) -= 1.0 / static_cast<double>(n);
    }
  }
  if (per_sample != nullptr) {
    *per_sample = losses;
  }
  return losses.mean();
}

double accuracy(const Matrix& logits, const std::vector<int>& labels) {
  const Eigen::Index n = logits.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n || n == 0) {
    throw std::invalid_argument("accuracy: one label per row required");
  }
  int correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (static_cast<int>(best) == labels[static_cast<std::size_t>(i)]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

void sgd_step(ParamStore& params, const ParamStore& grads, double lr, double momentum,
              double weight_decay, SgdState& state) {
  if (lr < 0.0) {
    throw std::invalid_argument("sgd_step: negative learning rate");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("sgd_step: momentum must be in [0, 1)");
  }
  if (weight_decay < 0.0) {
    throw std::invalid_argument("sgd_step: negative weight decay");
  }
  if (!state.initialized) {
    state.velocity = params.zeros_like();
    state.initialized = true;
  }
  auto vit = state.velocity.begin();
  auto git = grads.begin();
  for (auto& [name, p] : params) {
    if (git == grads.end() || git->first != name || vit->first != name) {
      throw std::invalid_argument("sgd_step: tensor sets differ at '" + name + "'");
    }
    check_same_shape(p, git->second, name);
    vit->second = momentum * vit->second + (git->second + weight_decay * p);
    p -= lr * vit->second;
    ++vit;
    ++git;
  }
}

void ema_update(ParamStore& ema, const ParamStore& params, double m) {
  if (m < 0.0 || m >= 1.0) {
    throw std::invalid_argument("ema_update: momentum must be in [0, 1)");
  }
  auto it = ema.begin();
  for (const auto& [name, p] : params) {
    if (it == ema.end() || it->first != name) {
      throw std::invalid_argument("ema_update: tensor sets differ at '" + name + "'");
    }
    check_same_shape(it->second, p, name);
    it->second = m * it->second + (1.0 - m) * p;
    ++it;
  }
}

}  // namespace diffrep
