#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ennal/predict.hpp"

namespace ennal {

enum class PriorityKind { uniform, entropy, margin, bald, variance };

inline std::string priority_name(PriorityKind k) {
  switch (k) {
    case PriorityKind::uniform: return "uniform";
    case PriorityKind::entropy: return "entropy";
    case PriorityKind::margin: return "margin";
    case PriorityKind::bald: return "bald";
    case PriorityKind::variance: return "variance";
  }
  return "?";
}

inline PriorityKind priority_from_name(const std::string& s) {
  if (s == "uniform") return PriorityKind::uniform;
  if (s == "entropy") return PriorityKind::entropy;
  if (s == "margin") return PriorityKind::margin;
  if (s == "bald") return PriorityKind::bald;
  if (s == "variance") return PriorityKind::variance;
  throw std::invalid_argument("unknown priority: " + s);
}

struct PrioritySpec {
  PriorityKind kind = PriorityKind::uniform;
  std::size_t index_samples = 10;  // n_Z used for scoring
};

/// Scalar priority with the probabilities it was computed from.
struct PriorityScore {
  double value = 0.0;
  std::vector<double> marginal;
  std::vector<double> conditional;  // n x C samples, row-major
  std::size_t n_samples = 0;
};

/// Shannon entropy, natural log, with 0 log 0 := 0. Probabilities below
/// 1e-12 are clamped inside the log only.
inline double shannon_entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v <= 0.0) continue;
    h -= v * std::log(std::max(v, 1e-12));
  }
  return h;
}

/// Margin priority: runner-up probability minus top probability (<= 0,
/// maximized at ties). Argmax ties resolve to the lowest class index.
inline double margin_from_probs(std::span<const double> p) {
  if (p.size() < 2) {
    throw std::invalid_argument("margin: need at least two classes");
  }
  std::size_t c1 = 0;
  for (std::size_t c = 1; c < p.size(); ++c) {
    if (p[c] > p[c1]) c1 = c;
  }
  std::size_t c2 = c1 == 0 ? 1 : 0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (c != c1 && p[c] > p[c2]) c2 = c;
  }
  return p[c2] - p[c1];
}

/// Priority value from a prediction set; both BALD terms use the same
/// conditional samples, which keeps the score nonnegative (Jensen).
inline double priority_from_set(PriorityKind kind, const PredictionSet& set) {
  switch (kind) {
    case PriorityKind::uniform:
      return 0.0;
    case PriorityKind::entropy:
      return shannon_entropy(set.marginal);
    case PriorityKind::margin:
      return margin_from_probs(set.marginal);
    case PriorityKind::bald: {
      const double h_marg = shannon_entropy(set.marginal);
      double s = 0.0;
      for (std::size_t i = 0; i < set.n; ++i) {
        s += h_marg - shannon_entropy(set.row(i));
      }
      double v = s / static_cast<double>(set.n);
      if (v < 0.0 && v > -1e-9) v = 0.0;  // FP guard on the Jensen bound
      return v;
    }
    case PriorityKind::variance: {
      double total = 0.0;
      for (std::size_t c = 0; c < set.classes; ++c) {
        const double mean = set.marginal[c];
        double s = 0.0;
        for (std::size_t i = 0; i < set.n; ++i) {
          const double d = set.conditional[i * set.classes + c] - mean;
          s += d * d;
        }
        total += s / static_cast<double>(set.n);
      }
      return total;
    }
  }
  throw std::logic_error("priority_from_set: bad kind");
}

namespace detail {

inline PriorityScore score_with_set(PriorityKind kind, const EnnModel& m,
                                    std::span<const double> x,
                                    std::span<const EpistemicIndex> zs) {
  if (zs.empty()) {
    throw std::invalid_argument("priority: empty index sample list");
  }
  PredictionSet set = predict_set(m, x, zs);
  PriorityScore out;
  out.value = priority_from_set(kind, set);
  out.marginal = std::move(set.marginal);
  out.conditional = std::move(set.conditional);
  out.n_samples = set.n;
  return out;
}

}  // namespace detail

/// g^uniform = 0 for every input; selection degenerates to tie-breaking.
inline PriorityScore g_uniform(const EnnModel&, std::span<const double>) {
  return PriorityScore{};
}

inline PriorityScore g_entropy(const EnnModel& m, std::span<const double> x,
                               std::span<const EpistemicIndex> zs) {
  return detail::score_with_set(PriorityKind::entropy, m, x, zs);
}

inline PriorityScore g_margin(const EnnModel& m, std::span<const double> x,
                              std::span<const EpistemicIndex> zs) {
  return detail::score_with_set(PriorityKind::margin, m, x, zs);
}

inline PriorityScore g_bald(const EnnModel& m, std::span<const double> x,
                            std::span<const EpistemicIndex> zs) {
  return detail::score_with_set(PriorityKind::bald, m, x, zs);
}

inline PriorityScore g_variance(const EnnModel& m, std::span<const double> x,
                                std::span<const EpistemicIndex> zs) {
  return detail::score_with_set(PriorityKind::variance, m, x, zs);
}

}  // namespace ennal
