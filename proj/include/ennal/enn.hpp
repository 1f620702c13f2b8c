#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ennal/dataset.hpp"
#include "ennal/numerics.hpp"
#include "ennal/rng.hpp"

namespace ennal {

enum class Arch { mlp, ensemble, dropout, epinet };

inline std::string arch_name(Arch a) {
  switch (a) {
    case Arch::mlp: return "mlp";
    case Arch::ensemble: return "ensemble";
    case Arch::dropout: return "dropout";
    case Arch::epinet: return "epinet";
  }
  return "?";
}

inline Arch arch_from_name(const std::string& s) {
  if (s == "mlp") return Arch::mlp;
  if (s == "ensemble") return Arch::ensemble;
  if (s == "dropout") return Arch::dropout;
  if (s == "epinet") return Arch::epinet;
  throw std::invalid_argument("unknown architecture: " + s);
}

/// Reference distribution P_Z over epistemic indices.
struct ReferenceDistribution {
  enum class Kind { gaussian, discrete, mask_seed };
  Kind kind = Kind::discrete;
  std::size_t index_dim = 10;   // gaussian dimension D_Z
  std::size_t members = 1;      // discrete support {0..K-1}
  double dropout_rate = 0.0;    // Bernoulli keep-probability is 1-p
};

/// Epistemic index z: a standard-normal vector, an ensemble member id,
/// or a seed deriving Bernoulli dropout masks.
struct EpistemicIndex {
  struct MemberId {
    std::size_t k = 0;
  };
  struct MaskSeed {
    std::uint64_t seed = 0;
  };
  std::variant<std::vector<double>, MemberId, MaskSeed> value;

  static EpistemicIndex gaussian(std::vector<double> v) {
    return {std::move(v)};
  }
  static EpistemicIndex member(std::size_t k) { return {MemberId{k}}; }
  static EpistemicIndex mask_seed(std::uint64_t s) { return {MaskSeed{s}}; }

  const std::vector<double>& as_gaussian() const {
    if (!std::holds_alternative<std::vector<double>>(value)) {
      throw std::invalid_argument("epistemic index: expected gaussian vector");
    }
    return std::get<std::vector<double>>(value);
  }
  std::size_t as_member() const {
    if (!std::holds_alternative<MemberId>(value)) {
      throw std::invalid_argument("epistemic index: expected member id");
    }
    return std::get<MemberId>(value).k;
  }
  std::uint64_t as_mask_seed() const {
    if (!std::holds_alternative<MaskSeed>(value)) {
      throw std::invalid_argument("epistemic index: expected mask seed");
    }
    return std::get<MaskSeed>(value).seed;
  }
};

inline EpistemicIndex sample_index(const ReferenceDistribution& ref, Rng& rng) {
  switch (ref.kind) {
    case ReferenceDistribution::Kind::gaussian: {
      std::vector<double> z(ref.index_dim);
      for (double& v : z) v = rng.normal();
      return EpistemicIndex::gaussian(std::move(z));
    }
    case ReferenceDistribution::Kind::discrete:
      return EpistemicIndex::member(rng.below(ref.members));
    case ReferenceDistribution::Kind::mask_seed:
      return EpistemicIndex::mask_seed(rng.bits());
  }
  throw std::logic_error("sample_index: bad kind");
}

/// All members of a discrete reference, in order (exact marginalization).
inline std::vector<EpistemicIndex> exhaustive_indices(
    const ReferenceDistribution& ref) {
  if (ref.kind != ReferenceDistribution::Kind::discrete) {
    throw std::invalid_argument("exhaustive_indices: reference not discrete");
  }
  std::vector<EpistemicIndex> out;
  out.reserve(ref.members);
  for (std::size_t k = 0; k < ref.members; ++k) {
    out.push_back(EpistemicIndex::member(k));
  }
  return out;
}

/// Construction recipe for an EnnModel.
struct EnnConfig {
  Arch arch = Arch::mlp;
  std::size_t input_dim = 10;
  std::size_t class_count = 2;
  std::vector<std::size_t> hidden{50, 50};
  std::size_t ensemble_size = 10;
  double dropout_rate = 0.1;
  std::size_t index_dim = 10;     // D_Z
  double prior_scale = 1.0;       // lambda on h^P
  std::vector<std::size_t> epi_hidden{50, 50};
  GlorotVariant init = GlorotVariant::uniform;
};

/// Epistemic neural network f_theta(x, z). For the epinet architecture the
/// output is mu(x) + (h_eta(concat(feat, z)) + prior_scale * h^P(...))^T z,
/// with h_eta, h^P producing class_count x index_dim arrays. h^P is frozen
/// at construction; trainable parameters are the base net(s) plus h_eta.
struct EnnModel {
  EnnConfig cfg;
  ReferenceDistribution ref;
  std::vector<MlpParams> base;  // one net, or ensemble members
  MlpParams epi_train;          // h_eta (epinet only)
  MlpParams epi_prior;          // h^P, never trained
  std::uint64_t prior_seed = 0;

  std::size_t class_count() const { return cfg.class_count; }
  std::size_t feature_dim() const {
    return cfg.hidden.empty() ? cfg.input_dim : cfg.hidden.back();
  }
};

inline std::vector<std::size_t> base_dims(const EnnConfig& cfg) {
  std::vector<std::size_t> dims;
  dims.push_back(cfg.input_dim);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.class_count);
  return dims;
}

inline std::vector<std::size_t> epi_dims(const EnnConfig& cfg) {
  const std::size_t feat =
      cfg.hidden.empty() ? cfg.input_dim : cfg.hidden.back();
  std::vector<std::size_t> dims;
  dims.push_back(feat + cfg.index_dim);
  dims.insert(dims.end(), cfg.epi_hidden.begin(), cfg.epi_hidden.end());
  dims.push_back(cfg.class_count * cfg.index_dim);
  return dims;
}

inline EnnModel make_enn(const EnnConfig& cfg, std::uint64_t seed) {
  if (cfg.input_dim == 0) throw std::invalid_argument("enn: input_dim >= 1");
  if (cfg.class_count < 2) throw std::invalid_argument("enn: class_count >= 2");
  if (cfg.arch == Arch::ensemble && cfg.ensemble_size == 0) {
    throw std::invalid_argument("enn: ensemble_size >= 1");
  }
  if (cfg.arch == Arch::dropout &&
      (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0)) {
    throw std::invalid_argument("enn: dropout_rate in [0,1)");
  }
  if (cfg.arch == Arch::epinet && cfg.index_dim == 0) {
    throw std::invalid_argument("enn: index_dim >= 1");
  }
  if (cfg.prior_scale < 0.0) throw std::invalid_argument("enn: prior_scale >= 0");

  EnnModel m;
  m.cfg = cfg;
  const auto dims = base_dims(cfg);
  const std::size_t n_base = cfg.arch == Arch::ensemble ? cfg.ensemble_size : 1;
  m.base.reserve(n_base);
  for (std::size_t k = 0; k < n_base; ++k) {
    Rng r(derive_seed(seed, "base", k));
    m.base.push_back(mlp_init(dims, r, cfg.init));
  }
  switch (cfg.arch) {
    case Arch::mlp:
      m.ref = {ReferenceDistribution::Kind::discrete, 0, 1, 0.0};
      break;
    case Arch::ensemble:
      m.ref = {ReferenceDistribution::Kind::discrete, 0, cfg.ensemble_size, 0.0};
      break;
    case Arch::dropout:
      m.ref = {ReferenceDistribution::Kind::mask_seed, 0, 1, cfg.dropout_rate};
      break;
    case Arch::epinet: {
      const auto ed = epi_dims(cfg);
      Rng re(derive_seed(seed, "epinet"));
      m.epi_train = mlp_init(ed, re, cfg.init);
      m.prior_seed = derive_seed(seed, "prior");
      Rng rp(m.prior_seed);
      m.epi_prior = mlp_init(ed, rp, cfg.init);
      m.ref = {ReferenceDistribution::Kind::gaussian, cfg.index_dim, 1, 0.0};
      break;
    }
  }
  return m;
}

/// Per-hidden-layer dropout mask scales (0 or 1/(1-p)), derived
/// deterministically from the mask seed. Units are drawn layer by layer in
/// network order, so the same seed always yields the same masks.
inline std::vector<std::vector<double>> dropout_masks(
    const EnnModel& m, std::uint64_t mask_seed) {
  Rng r(mask_seed);
  const double p = m.cfg.dropout_rate;
  const double scale = 1.0 / (1.0 - p);
  std::vector<std::vector<double>> masks;
  masks.reserve(m.cfg.hidden.size());
  for (std::size_t width : m.cfg.hidden) {
    std::vector<double> mask(width);
    for (double& v : mask) v = r.uniform() >= p ? scale : 0.0;
    masks.push_back(std::move(mask));
  }
  return masks;
}

/// Masked forward; acts hold post-ReLU, post-mask activations.
inline void dropout_forward_trace(const MlpParams& p,
                                  std::span<const double> x,
                                  const std::vector<std::vector<double>>& masks,
                                  MlpTrace& trace) {
  mlp_forward_trace(p, x, trace);  // computes all layers without masks
  // Re-run with masks (cheap at these sizes, keeps one code path correct).
  trace.acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const DenseLayer& layer = p.layers[l];
    auto& out = trace.acts[l + 1];
    out.assign(layer.b.begin(), layer.b.end());
    matvec_acc(layer.w, trace.acts[l].data(), out.data());
    if (l + 1 < p.layers.size()) {
      const auto& mask = masks[l];
      for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = out[j] > 0.0 ? out[j] * mask[j] : 0.0;
      }
    }
  }
}

/// Backward for the masked net; the mask scale enters the chain rule when
/// stepping across each hidden layer.
inline void dropout_backward_acc(const MlpParams& p, const MlpTrace& trace,
                                 const std::vector<std::vector<double>>& masks,
                                 std::span<const double> upstream,
                                 double* flat_grad) {
  const std::size_t n_layers = p.layers.size();
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
      const auto& mask = masks[l - 1];
      for (std::size_t j = 0; j < prev.size(); ++j) {
        prev[j] = in[j] > 0.0 ? prev[j] * mask[j] : 0.0;
      }
      delta.swap(prev);
    }
  }
}

/// Contract a head output (class_count x index_dim, flattened row-major)
/// against z, adding into logits.
inline void contract_head(std::span<const double> head_out,
                          std::span<const double> z, double coeff,
                          std::span<double> logits) {
  const std::size_t dz = z.size();
  for (std::size_t c = 0; c < logits.size(); ++c) {
    double s = 0.0;
    for (std::size_t d = 0; d < dz; ++d) s += head_out[c * dz + d] * z[d];
    logits[c] += coeff * s;
  }
}

/// f_theta(x, z). mlp ignores z; ensemble selects member z; dropout applies
/// z-derived masks with inverted scaling; epinet adds the index-contracted
/// head output on stop-gradient features.
inline std::vector<double> enn_forward(const EnnModel& m,
                                       std::span<const double> x,
                                       const EpistemicIndex& z) {
  switch (m.cfg.arch) {
    case Arch::mlp:
      return mlp_forward(m.base[0], x);
    case Arch::ensemble: {
      const std::size_t k = z.as_member();
      if (k >= m.base.size()) {
        throw std::invalid_argument("enn_forward: member id out of range");
      }
      return mlp_forward(m.base[k], x);
    }
    case Arch::dropout: {
      const auto masks = dropout_masks(m, z.as_mask_seed());
      MlpTrace t;
      dropout_forward_trace(m.base[0], x, masks, t);
      return std::move(t.acts.back());
    }
    case Arch::epinet: {
      const auto& zv = z.as_gaussian();
      if (zv.size() != m.cfg.index_dim) {
        throw std::invalid_argument("enn_forward: index width mismatch");
      }
      MlpTrace t;
      mlp_forward_trace(m.base[0], x, t);
      const auto& feat = t.acts[t.acts.size() - 2];
      std::vector<double> u(feat.size() + zv.size());
      std::copy(feat.begin(), feat.end(), u.begin());
      std::copy(zv.begin(), zv.end(), u.begin() + feat.size());
      const std::vector<double> eta = mlp_forward(m.epi_train, u);
      const std::vector<double> prior = mlp_forward(m.epi_prior, u);
      std::vector<double> logits = t.acts.back();
      contract_head(eta, zv, 1.0, logits);
      contract_head(prior, zv, m.cfg.prior_scale, logits);
      return logits;
    }
  }
  throw std::logic_error("enn_forward: bad arch");
}

inline std::size_t enn_trainable_count(const EnnModel& m) {
  std::size_t n = 0;
  for (const auto& net : m.base) n += net.param_count();
  if (m.cfg.arch == Arch::epinet) n += m.epi_train.param_count();
  return n;
}

/// Trainable parameters, flattened: base nets in order (each layer W
/// row-major then b), then h_eta. h^P is excluded.
inline std::vector<double> enn_flatten(const EnnModel& m) {
  std::vector<double> flat(enn_trainable_count(m));
  double* dst = flat.data();
  for (const auto& net : m.base) {
    copy_params_to_flat(net, dst);
    dst += net.param_count();
  }
  if (m.cfg.arch == Arch::epinet) copy_params_to_flat(m.epi_train, dst);
  return flat;
}

inline void enn_set_params(EnnModel& m, std::span<const double> flat) {
  if (flat.size() != enn_trainable_count(m)) {
    throw std::invalid_argument("enn_set_params: size mismatch");
  }
  const double* src = flat.data();
  for (auto& net : m.base) src = copy_params_from_flat(net, src);
  if (m.cfg.arch == Arch::epinet) copy_params_from_flat(m.epi_train, src);
}

/// Sum over index samples and batch of the cross-entropy-plus-L2 loss.
/// The L2 penalty covers trainable parameters only and appears once per
/// (z, example) term, exactly as the per-term loss defines it.
inline double enn_loss(const EnnModel& m, std::span<const Example> batch,
                       std::span<const EpistemicIndex> zs, double lambda) {
  if (batch.empty()) throw std::invalid_argument("enn_loss: empty batch");
  if (zs.empty()) throw std::invalid_argument("enn_loss: empty index samples");
  double loss = 0.0;
  for (const auto& z : zs) {
    for (const auto& ex : batch) {
      const std::vector<double> logits = enn_forward(m, ex.x, z);
      const std::vector<double> lp = log_softmax(logits);
      if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= lp.size()) {
        throw std::out_of_range("enn_loss: label out of range");
      }
      loss += -lp[ex.label];
    }
  }
  if (lambda > 0.0) {
    const std::vector<double> flat = enn_flatten(m);
    loss += lambda * static_cast<double>(zs.size() * batch.size()) *
            squared_norm(flat);
  }
  return loss;
}

namespace detail {

inline void softmax_grad(std::span<const double> logits, int label,
                         std::vector<double>& g) {
  const std::vector<double> lp = log_softmax(logits);
  g.resize(lp.size());
  for (std::size_t c = 0; c < lp.size(); ++c) g[c] = std::exp(lp[c]);
  if (label < 0 || static_cast<std::size_t>(label) >= g.size()) {
    throw std::out_of_range("enn gradient: label out of range");
  }
  g[label] -= 1.0;
}

}  // namespace detail

/// Gradient of enn_loss over the trainable flat parameter vector.
/// For the epinet, no gradient flows from the head back into the base
/// through the features (stop gradient), and h^P receives none.
inline std::vector<double> enn_loss_grad(const EnnModel& m,
                                         std::span<const Example> batch,
                                         std::span<const EpistemicIndex> zs,
                                         double lambda) {
  if (batch.empty()) throw std::invalid_argument("enn_loss_grad: empty batch");
  if (zs.empty()) {
    throw std::invalid_argument("enn_loss_grad: empty index samples");
  }
  std::vector<double> grad(enn_trainable_count(m), 0.0);
  std::vector<double> g;

  switch (m.cfg.arch) {
    case Arch::mlp: {
      // Every z contributes the same term.
      const double mult = static_cast<double>(zs.size());
      MlpTrace t;
      std::vector<double> up;
      for (const auto& ex : batch) {
        mlp_forward_trace(m.base[0], ex.x, t);
        detail::softmax_grad(t.acts.back(), ex.label, g);
        up.resize(g.size());
        for (std::size_t c = 0; c < g.size(); ++c) up[c] = mult * g[c];
        mlp_backward_acc(m.base[0], t, up, grad.data());
      }
      break;
    }
    case Arch::ensemble: {
      // Repeated member ids accumulate proportionally.
      std::vector<std::size_t> counts(m.base.size(), 0);
      for (const auto& z : zs) {
        const std::size_t k = z.as_member();
        if (k >= m.base.size()) {
          throw std::invalid_argument("enn_loss_grad: member id out of range");
        }
        ++counts[k];
      }
      std::vector<std::size_t> offsets(m.base.size(), 0);
      for (std::size_t k = 1; k < m.base.size(); ++k) {
        offsets[k] = offsets[k - 1] + m.base[k - 1].param_count();
      }
      MlpTrace t;
      std::vector<double> up;
      for (std::size_t k = 0; k < m.base.size(); ++k) {
        if (counts[k] == 0) continue;
        const double mult = static_cast<double>(counts[k]);
        for (const auto& ex : batch) {
          mlp_forward_trace(m.base[k], ex.x, t);
          detail::softmax_grad(t.acts.back(), ex.label, g);
          up.resize(g.size());
          for (std::size_t c = 0; c < g.size(); ++c) up[c] = mult * g[c];
          mlp_backward_acc(m.base[k], t, up, grad.data() + offsets[k]);
        }
      }
      break;
    }
    case Arch::dropout: {
      MlpTrace t;
      for (const auto& z : zs) {
        const auto masks = dropout_masks(m, z.as_mask_seed());
        for (const auto& ex : batch) {
          dropout_forward_trace(m.base[0], ex.x, masks, t);
          detail::softmax_grad(t.acts.back(), ex.label, g);
          dropout_backward_acc(m.base[0], t, masks, g, grad.data());
        }
      }
      break;
    }
    case Arch::epinet: {
      const std::size_t dz = m.cfg.index_dim;
      const std::size_t classes = m.cfg.class_count;
      const std::size_t base_count = m.base[0].param_count();
      MlpTrace base_t, eta_t;
      std::vector<double> u, logits, base_up, eta_up(classes * dz);
      for (const auto& ex : batch) {
        mlp_forward_trace(m.base[0], ex.x, base_t);
        const auto& feat = base_t.acts[base_t.acts.size() - 2];
        base_up.assign(classes, 0.0);
        for (const auto& z : zs) {
          const auto& zv = z.as_gaussian();
          if (zv.size() != dz) {
            throw std::invalid_argument("enn_loss_grad: index width mismatch");
          }
          u.resize(feat.size() + dz);
          std::copy(feat.begin(), feat.end(), u.begin());
          std::copy(zv.begin(), zv.end(), u.begin() + feat.size());
          mlp_forward_trace(m.epi_train, u, eta_t);
          const std::vector<double> prior = mlp_forward(m.epi_prior, u);
          logits = base_t.acts.back();
          contract_head(eta_t.acts.back(), zv, 1.0, logits);
          contract_head(prior, zv, m.cfg.prior_scale, logits);
          detail::softmax_grad(logits, ex.label, g);
          // Base path: d loss / d mu = g, summed over z.
          for (std::size_t c = 0; c < classes; ++c) base_up[c] += g[c];
          // Head path: d loss / d h_eta[c,d] = g[c] * z[d].
          for (std::size_t c = 0; c < classes; ++c) {
            for (std::size_t d = 0; d < dz; ++d) {
              eta_up[c * dz + d] = g[c] * zv[d];
            }
          }
          mlp_backward_acc(m.epi_train, eta_t, eta_up,
                           grad.data() + base_count);
        }
        mlp_backward_acc(m.base[0], base_t, base_up, grad.data());
      }
      break;
    }
  }

  if (lambda > 0.0) {
    const std::vector<double> flat = enn_flatten(m);
    const double coeff =
        2.0 * lambda * static_cast<double>(zs.size() * batch.size());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += coeff * flat[i];
  }
  return grad;
}

}  // namespace ennal
