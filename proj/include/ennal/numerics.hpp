#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ennal/linalg.hpp"
#include "ennal/rng.hpp"

namespace ennal {

enum class GlorotVariant { uniform, normal };

/// Glorot-initialized weight matrix (fan_out x fan_in), entry variance
/// 2 / (fan_in + fan_out). Uniform variant draws from
/// [-sqrt(6/(fi+fo)), +sqrt(6/(fi+fo))]; normal uses the matching sigma.
inline Matrix glorot_init(std::size_t fan_in, std::size_t fan_out, Rng& rng,
                          GlorotVariant variant = GlorotVariant::uniform) {
  if (fan_in == 0 || fan_out == 0) {
    throw std::invalid_argument("glorot_init: dimensions must be positive");
  }
  Matrix w(fan_out, fan_in);
  const double denom = static_cast<double>(fan_in + fan_out);
  if (variant == GlorotVariant::uniform) {
    const double limit = std::sqrt(6.0 / denom);
    for (double& x : w.data) x = (2.0 * rng.uniform() - 1.0) * limit;
  } else {
    const double sigma = std::sqrt(2.0 / denom);
    for (double& x : w.data) x = sigma * rng.normal();
  }
  return w;
}

/// One affine layer: out = W x + b.
struct DenseLayer {
  Matrix w;
  std::vector<double> b;
};

/// Fully connected net, rectified-linear between layers, affine output.
struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().w.cols; }
  std::size_t output_dim() const { return layers.back().w.rows; }
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.size() + l.b.size();
    return n;
  }
};

/// dims = {input, hidden..., output}; weights Glorot, biases zero.
inline MlpParams mlp_init(std::span<const std::size_t> dims, Rng& rng,
                          GlorotVariant variant = GlorotVariant::uniform) {
  if (dims.size() < 2) throw std::invalid_argument("mlp_init: need >= 2 dims");
  MlpParams p;
  p.layers.reserve(dims.size() - 1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.w = glorot_init(dims[l], dims[l + 1], rng, variant);
    layer.b.assign(dims[l + 1], 0.0);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

inline void check_chain(const MlpParams& p, std::size_t input_width) {
  std::size_t w = input_width;
  for (const auto& l : p.layers) {
    if (l.w.cols != w || l.b.size() != l.w.rows) {
      throw std::invalid_argument("mlp: layer dimensions do not chain");
    }
    w = l.w.rows;
  }
}

/// Per-layer activations from a forward pass; acts[0] is the input,
/// acts[l+1] the output of layer l (post-ReLU on hidden layers).
struct MlpTrace {
  std::vector<std::vector<double>> acts;
};

inline void mlp_forward_trace(const MlpParams& p, std::span<const double> x,
                              MlpTrace& trace) {
  check_chain(p, x.size());
  trace.acts.resize(p.layers.size() + 1);
  trace.acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const DenseLayer& layer = p.layers[l];
    auto& out = trace.acts[l + 1];
    out.assign(layer.b.begin(), layer.b.end());
    matvec_acc(layer.w, trace.acts[l].data(), out.data());
    if (l + 1 < p.layers.size()) {
      for (double& v : out) v = v > 0.0 ? v : 0.0;
    }
  }
}

inline std::vector<double> mlp_forward(const MlpParams& p,
                                       std::span<const double> x) {
  MlpTrace t;
  mlp_forward_trace(p, x, t);
  return std::move(t.acts.back());
}

/// Gradient container shaped like the parameter set it differentiates.
using MlpGrad = MlpParams;

inline MlpGrad zero_grad_like(const MlpParams& p) {
  MlpGrad g;
  g.layers.resize(p.layers.size());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    g.layers[l].w = Matrix(p.layers[l].w.rows, p.layers[l].w.cols);
    g.layers[l].b.assign(p.layers[l].b.size(), 0.0);
  }
  return g;
}

/// Backward pass for the scalar logits . upstream, accumulating weight and
/// bias gradients into a flat segment laid out layer-by-layer (W row-major,
/// then b). Hidden ReLU derivative uses post-activation sign (relu'(0) = 0).
inline void mlp_backward_acc(const MlpParams& p, const MlpTrace& trace,
                             std::span<const double> upstream,
                             double* flat_grad) {
  const std::size_t n_layers = p.layers.size();
  if (upstream.size() != p.output_dim()) {
    throw std::invalid_argument("mlp_backward: upstream width mismatch");
  }
  // Offsets of each layer inside the flat segment.
  std::vector<std::size_t> offset(n_layers);
  std::size_t total = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    offset[l] = total;
    total += p.layers[l].w.size() + p.layers[l].b.size();
  }
  std::vector<double> delta(upstream.begin(), upstream.end());
  std::vector<double> prev;
  for (std::size_t l = n_layers; l-- > 0;) {
    const DenseLayer& layer = p.layers[l];
    const auto& in = trace.acts[l];
    double* gw = flat_grad + offset[l];
    double* gb = gw + layer.w.size();
    for (std::size_t i = 0; i < layer.w.rows; ++i) {
      const double d = delta[i];
      double* grow = gw + i * layer.w.cols;
      for (std::size_t j = 0; j < layer.w.cols; ++j) grow[j] += d * in[j];
      gb[i] += d;
    }
    if (l > 0) {
      prev.assign(layer.w.cols, 0.0);
      matvec_transpose_acc(layer.w, delta.data(), prev.data());
      for (std::size_t j = 0; j < prev.size(); ++j) {
        if (in[j] <= 0.0) prev[j] = 0.0;  // hidden act is post-ReLU
      }
      delta.swap(prev);
    }
  }
}

/// Analytic gradient of logits . upstream w.r.t. every weight and bias.
inline MlpGrad mlp_backward(const MlpParams& p, std::span<const double> x,
                            std::span<const double> upstream) {
  MlpTrace t;
  mlp_forward_trace(p, x, t);
  std::vector<double> flat(p.param_count(), 0.0);
  mlp_backward_acc(p, t, upstream, flat.data());
  MlpGrad g = zero_grad_like(p);
  std::size_t o = 0;
  for (auto& l : g.layers) {
    for (double& v : l.w.data) v = flat[o++];
    for (double& v : l.b) v = flat[o++];
  }
  return g;
}

inline void copy_params_to_flat(const MlpParams& p, double* dst) {
  for (const auto& l : p.layers) {
    for (double v : l.w.data) *dst++ = v;
    for (double v : l.b) *dst++ = v;
  }
}

inline const double* copy_params_from_flat(MlpParams& p, const double* src) {
  for (auto& l : p.layers) {
    for (double& v : l.w.data) v = *src++;
    for (double& v : l.b) v = *src++;
  }
  return src;
}

/// Numerically stable log-probabilities (max subtraction + log-sum-exp).
inline std::vector<double> log_softmax(std::span<const double> logits) {
  if (!all_finite(logits)) {
    throw std::invalid_argument("log_softmax: non-finite input");
  }
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p = log_softmax(logits);
  for (double& v : p) v = std::exp(v);
  return p;
}

/// Cross-entropy with L2 penalty: -log softmax(logits)_label + lambda |p|^2.
/// label is 0-based.
inline double xent_l2_loss(std::span<const double> logits, std::size_t label,
                           std::span<const double> params_flat, double lambda) {
  if (label >= logits.size()) {
    throw std::out_of_range("xent_l2_loss: label out of range");
  }
  if (lambda < 0.0) throw std::invalid_argument("xent_l2_loss: lambda < 0");
  const std::vector<double> lp = log_softmax(logits);
  return -lp[label] + lambda * squared_norm(params_flat);
}

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;
  double clip_norm = 1.0;  // global-norm clip applied before moment updates
};

struct AdamState {
  std::size_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  AdamSettings settings;
};

inline AdamState make_adam(std::size_t n_params, AdamSettings settings = {}) {
  AdamState s;
  s.first_moment.assign(n_params, 0.0);
  s.second_moment.assign(n_params, 0.0);
  s.settings = settings;
  return s;
}

/// One Adam step with global-norm gradient clipping and bias correction.
/// Value-returning; the caller owns state evolution.
inline std::pair<std::vector<double>, AdamState> adam_step(
    const AdamState& state, std::span<const double> params,
    std::span<const double> grad) {
  if (grad.size() != params.size() || state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  const AdamSettings& c = state.settings;
  AdamState next = state;
  next.step = state.step + 1;
  std::vector<double> out(params.begin(), params.end());

  double scale = 1.0;
  if (c.clip_norm > 0.0) {
    const double norm = std::sqrt(squared_norm(grad));
    if (norm > c.clip_norm) scale = c.clip_norm / norm;
  }
  const double c1 = 1.0 - std::pow(c.beta1, static_cast<double>(next.step));
  const double c2 = 1.0 - std::pow(c.beta2, static_cast<double>(next.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i] * scale;
    next.first_moment[i] = c.beta1 * next.first_moment[i] + (1.0 - c.beta1) * g;
    next.second_moment[i] =
        c.beta2 * next.second_moment[i] + (1.0 - c.beta2) * g * g;
    const double mhat = next.first_moment[i] / c1;
    const double vhat = next.second_moment[i] / c2;
    out[i] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
  }
  return {std::move(out), std::move(next)};
}

/// Central-difference gradient oracle: (f(p + h e_i) - f(p - h e_i)) / 2h.
inline std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& loss_fn,
    std::vector<double> params, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + h;
    const double up = loss_fn(params);
    params[i] = saved - h;
    const double down = loss_fn(params);
    params[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

}  // namespace ennal
