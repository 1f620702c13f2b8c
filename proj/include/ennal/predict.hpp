#pragma once

#include <cstring>
#include <optional>
#include <span>
#include <vector>

#include "ennal/enn.hpp"

namespace ennal {

/// Conditional class probabilities for a set of index samples, plus their
/// Monte-Carlo marginal (exact when the samples are exhaustive or the rows
/// coincide).
struct PredictionSet {
  std::size_t n = 0;
  std::size_t classes = 0;
  std::vector<double> conditional;  // n x classes, row-major
  std::vector<double> marginal;     // classes

  std::span<const double> row(std::size_t i) const {
    return {conditional.data() + i * classes, classes};
  }
};

inline std::vector<EpistemicIndex> draw_indices(
    const ReferenceDistribution& ref, std::size_t n, Rng& rng) {
  std::vector<EpistemicIndex> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_index(ref, rng));
  return out;
}

namespace detail {

inline void softmax_rows(std::vector<double>& rows, std::size_t n,
                         std::size_t c) {
  for (std::size_t i = 0; i < n; ++i) {
    double* r = rows.data() + i * c;
    double m = r[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, r[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      r[j] = std::exp(r[j] - m);
      sum += r[j];
    }
    for (std::size_t j = 0; j < c; ++j) r[j] /= sum;
  }
}

/// Marginal = arithmetic mean of the rows. When every row is bitwise
/// identical the common row is returned as-is, so z-independent models get
/// an exact marginal (and exactly-zero epistemic priorities downstream).
inline void mean_rows(const std::vector<double>& rows, std::size_t n,
                      std::size_t c, std::vector<double>& out) {
  out.assign(rows.begin(), rows.begin() + c);
  bool identical = true;
  for (std::size_t i = 1; i < n && identical; ++i) {
    identical = std::memcmp(rows.data(), rows.data() + i * c,
                            c * sizeof(double)) == 0;
  }
  if (identical) return;
  for (std::size_t i = 1; i < n; ++i) {
    const double* r = rows.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) out[j] += r[j];
  }
  for (double& v : out) v /= static_cast<double>(n);
}

}  // namespace detail

/// Evaluates one model snapshot at many inputs against a fixed set of index
/// samples. Construction precomputes everything that depends only on
/// (model, z set): dropout masks, transposed weight blocks for the batched
/// epinet head, ensemble member ids. predict() then costs one base forward
/// plus the per-index head/mask work.
class Predictor {
 public:
  Predictor(const EnnModel& model, std::vector<EpistemicIndex> zs)
      : m_(model), zs_(std::move(zs)) {
    if (zs_.empty()) {
      throw std::invalid_argument("Predictor: empty index sample list");
    }
    set_.n = zs_.size();
    set_.classes = m_.class_count();
    set_.conditional.resize(set_.n * set_.classes);
    switch (m_.cfg.arch) {
      case Arch::mlp:
        break;
      case Arch::ensemble:
        members_.reserve(zs_.size());
        for (const auto& z : zs_) {
          const std::size_t k = z.as_member();
          if (k >= m_.base.size()) {
            throw std::invalid_argument("Predictor: member id out of range");
          }
          members_.push_back(k);
        }
        member_probs_.resize(m_.base.size());
        break;
      case Arch::dropout: {
        const auto& layers = m_.base[0].layers;
        masks_.resize(layers.size() > 0 ? layers.size() - 1 : 0);
        for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
          masks_[l] = Matrix(zs_.size(), layers[l].w.rows);
        }
        for (std::size_t i = 0; i < zs_.size(); ++i) {
          const auto per_layer = dropout_masks(m_, zs_[i].as_mask_seed());
          for (std::size_t l = 0; l < per_layer.size(); ++l) {
            std::copy(per_layer[l].begin(), per_layer[l].end(),
                      masks_[l].row(i));
          }
        }
        wt_.resize(layers.size());
        for (std::size_t l = 1; l < layers.size(); ++l) {
          transpose_into(layers[l].w, wt_[l]);
        }
        break;
      }
      case Arch::epinet: {
        const std::size_t dz = m_.cfg.index_dim;
        zmat_ = Matrix(zs_.size(), dz);
        for (std::size_t i = 0; i < zs_.size(); ++i) {
          const auto& zv = zs_[i].as_gaussian();
          if (zv.size() != dz) {
            throw std::invalid_argument("Predictor: index width mismatch");
          }
          std::copy(zv.begin(), zv.end(), zmat_.row(i));
        }
        prep_head(m_.epi_train, eta_);
        prep_head(m_.epi_prior, prior_);
        break;
      }
    }
  }

  const std::vector<EpistemicIndex>& indices() const { return zs_; }

  const PredictionSet& predict(std::span<const double> x) {
    const std::size_t n = set_.n;
    const std::size_t c = set_.classes;
    switch (m_.cfg.arch) {
      case Arch::mlp: {
        const std::vector<double> probs = softmax(mlp_forward(m_.base[0], x));
        for (std::size_t i = 0; i < n; ++i) {
          std::copy(probs.begin(), probs.end(),
                    set_.conditional.begin() + i * c);
        }
        break;
      }
      case Arch::ensemble: {
        for (auto& p : member_probs_) p.reset();
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t k = members_[i];
          if (!member_probs_[k]) {
            member_probs_[k] = softmax(mlp_forward(m_.base[k], x));
          }
          std::copy(member_probs_[k]->begin(), member_probs_[k]->end(),
                    set_.conditional.begin() + i * c);
        }
        break;
      }
      case Arch::dropout:
        predict_dropout(x);
        break;
      case Arch::epinet:
        predict_epinet(x);
        break;
    }
    detail::mean_rows(set_.conditional, n, c, set_.marginal);
    return set_;
  }

 private:
  struct HeadCache {
    const MlpParams* net = nullptr;
    Matrix w0z_t;                // (D_Z x H1) slice of layer-0 weights
    std::vector<Matrix> wt;      // transposed layers 1..L-1
    std::vector<double> shared;  // layer-0 x-part, per predict() call
  };

  void prep_head(const MlpParams& net, HeadCache& h) {
    h.net = &net;
    const Matrix& w0 = net.layers[0].w;
    const std::size_t feat = m_.feature_dim();
    const std::size_t dz = m_.cfg.index_dim;
    h.w0z_t = Matrix(dz, w0.rows);
    for (std::size_t i = 0; i < w0.rows; ++i) {
      for (std::size_t d = 0; d < dz; ++d) h.w0z_t(d, i) = w0(i, feat + d);
    }
    h.wt.resize(net.layers.size());
    for (std::size_t l = 1; l < net.layers.size(); ++l) {
      transpose_into(net.layers[l].w, h.wt[l]);
    }
  }

  /// Batched head forward over the fixed z set; output n x (C * D_Z).
  const Matrix& run_head(HeadCache& h, std::span<const double> feat) {
    const MlpParams& net = *h.net;
    const std::size_t n = zs_.size();
    const Matrix& w0 = net.layers[0].w;
    h.shared.assign(net.layers[0].b.begin(), net.layers[0].b.end());
    // x-part of layer 0 is shared by every index sample.
    for (std::size_t i = 0; i < w0.rows; ++i) {
      const double* r = w0.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < feat.size(); ++j) s += r[j] * feat[j];
      h.shared[i] += s;
    }
    a_ = Matrix(n, w0.rows);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(h.shared.begin(), h.shared.end(), a_.row(i));
    }
    matmul_acc(zmat_.data.data(), h.w0z_t.data.data(), a_.data.data(), n,
               zmat_.cols, w0.rows);
    if (net.layers.size() > 1) {
      for (double& v : a_.data) v = v > 0.0 ? v : 0.0;
    }
    for (std::size_t l = 1; l < net.layers.size(); ++l) {
      const DenseLayer& layer = net.layers[l];
      b_ = Matrix(n, layer.w.rows);
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(layer.b.begin(), layer.b.end(), b_.row(i));
      }
      matmul_acc(a_.data.data(), h.wt[l].data.data(), b_.data.data(), n,
                 layer.w.cols, layer.w.rows);
      if (l + 1 < net.layers.size()) {
        for (double& v : b_.data) v = v > 0.0 ? v : 0.0;
      }
      std::swap(a_, b_);
    }
    return a_;
  }

  void predict_epinet(std::span<const double> x) {
    const std::size_t n = set_.n;
    const std::size_t c = set_.classes;
    const std::size_t dz = m_.cfg.index_dim;
    mlp_forward_trace(m_.base[0], x, trace_);
    const auto& feat = trace_.acts[trace_.acts.size() - 2];
    const std::vector<double> base_logits = trace_.acts.back();
    head_out_ = run_head(eta_, feat).data;       // n x (c*dz)
    const Matrix& prior = run_head(prior_, feat);  // lives in a_
    const double lam = m_.cfg.prior_scale;
    for (std::size_t i = 0; i < n; ++i) {
      double* out = set_.conditional.data() + i * c;
      const double* he = head_out_.data() + i * c * dz;
      const double* hp = prior.row(i);
      const double* z = zmat_.row(i);
      for (std::size_t cls = 0; cls < c; ++cls) {
        double s = 0.0;
        for (std::size_t d = 0; d < dz; ++d) {
          s += (he[cls * dz + d] + lam * hp[cls * dz + d]) * z[d];
        }
        out[cls] = base_logits[cls] + s;
      }
    }
    detail::softmax_rows(set_.conditional, n, c);
  }

  void predict_dropout(std::span<const double> x) {
    const std::size_t n = set_.n;
    const std::size_t c = set_.classes;
    const auto& layers = m_.base[0].layers;
    if (layers.size() == 1) {
      std::vector<double> logits(layers[0].b);
      matvec_acc(layers[0].w, x.data(), logits.data());
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(logits.begin(), logits.end(),
                  set_.conditional.begin() + i * c);
      }
      detail::softmax_rows(set_.conditional, n, c);
      return;
    }
    // First hidden layer is shared; masks differ per index.
    std::vector<double> a1(layers[0].b);
    matvec_acc(layers[0].w, x.data(), a1.data());
    for (double& v : a1) v = v > 0.0 ? v : 0.0;
    a_ = Matrix(n, a1.size());
    for (std::size_t i = 0; i < n; ++i) {
      const double* mask = masks_[0].row(i);
      double* r = a_.row(i);
      for (std::size_t j = 0; j < a1.size(); ++j) r[j] = a1[j] * mask[j];
    }
    for (std::size_t l = 1; l < layers.size(); ++l) {
      const DenseLayer& layer = layers[l];
      b_ = Matrix(n, layer.w.rows);
      for (std::size_t i = 0; i < n; ++i) {
        std::copy(layer.b.begin(), layer.b.end(), b_.row(i));
      }
      matmul_acc(a_.data.data(), wt_[l].data.data(), b_.data.data(), n,
                 layer.w.cols, layer.w.rows);
      if (l + 1 < layers.size()) {
        for (std::size_t i = 0; i < n; ++i) {
          const double* mask = masks_[l].row(i);
          double* r = b_.row(i);
          for (std::size_t j = 0; j < layer.w.rows; ++j) {
            r[j] = r[j] > 0.0 ? r[j] * mask[j] : 0.0;
          }
        }
      }
      std::swap(a_, b_);
    }
    std::copy(a_.data.begin(), a_.data.end(), set_.conditional.begin());
    detail::softmax_rows(set_.conditional, n, c);
  }

  const EnnModel& m_;
  std::vector<EpistemicIndex> zs_;
  PredictionSet set_;
  // ensemble
  std::vector<std::size_t> members_;
  std::vector<std::optional<std::vector<double>>> member_probs_;
  // dropout
  std::vector<Matrix> masks_;
  std::vector<Matrix> wt_;
  // epinet
  Matrix zmat_;
  HeadCache eta_, prior_;
  std::vector<double> head_out_;
  // scratch
  MlpTrace trace_;
  Matrix a_, b_;
};

/// Conditional class probabilities p(. | theta, x, z).
inline std::vector<double> class_probs_conditional(const EnnModel& m,
                                                   std::span<const double> x,
                                                   const EpistemicIndex& z) {
  return softmax(enn_forward(m, x, z));
}

/// Monte-Carlo class probabilities and conditionals for a sample set.
inline PredictionSet predict_set(const EnnModel& m, std::span<const double> x,
                                 std::span<const EpistemicIndex> zs) {
  Predictor pred(m, std::vector<EpistemicIndex>(zs.begin(), zs.end()));
  return pred.predict(x);
}

/// Marginal class probabilities p(. | theta, x), estimated as the mean of
/// the conditionals over the given samples; exact for exhaustive discrete
/// sample lists.
inline std::vector<double> class_probs_marginal(
    const EnnModel& m, std::span<const double> x,
    std::span<const EpistemicIndex> zs) {
  if (zs.empty()) {
    throw std::invalid_argument("class_probs_marginal: empty sample list");
  }
  return predict_set(m, x, zs).marginal;
}

}  // namespace ennal
