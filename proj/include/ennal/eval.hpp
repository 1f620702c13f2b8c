#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ennal/predict.hpp"

namespace ennal {

enum class Metric { nll, accuracy };

inline const char* metric_name(Metric m) {
  return m == Metric::nll ? "nll" : "accuracy";
}

struct TestMetrics {
  double log_likelihood = 0.0;  // mean ln p(y|x), natural log
  double accuracy = 0.0;
  std::size_t n_test = 0;
};

/// Held-out metrics via marginal probabilities: mean ln p_bar(y_i|x_i) and
/// argmax accuracy (lowest class index on ties). Probabilities are clamped
/// at 1e-12 inside the log so curves stay finite.
inline TestMetrics evaluate(const EnnModel& m, std::span<const Example> test,
                            std::span<const EpistemicIndex> zs) {
  if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
  if (zs.empty()) throw std::invalid_argument("evaluate: empty index samples");
  Predictor pred(m, std::vector<EpistemicIndex>(zs.begin(), zs.end()));
  double ll = 0.0;
  std::size_t correct = 0;
  for (const Example& e : test) {
    const PredictionSet& set = pred.predict(e.x);
    const auto& p = set.marginal;
    ll += std::log(std::max(p[e.label], 1e-12));
    std::size_t top = 0;
    for (std::size_t c = 1; c < p.size(); ++c) {
      if (p[c] > p[top]) top = c;
    }
    if (top == static_cast<std::size_t>(e.label)) ++correct;
  }
  TestMetrics out;
  out.n_test = test.size();
  out.log_likelihood = ll / static_cast<double>(test.size());
  out.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  return out;
}

/// One learning-curve record; test_nll is the negative mean log-likelihood.
struct CurvePoint {
  std::size_t step = 0;
  std::size_t labels = 0;
  double test_nll = 0.0;
  double test_acc = 0.0;
  double wall_ms = 0.0;
};

using LearningCurve = std::vector<CurvePoint>;

/// Smallest labels-revealed value whose record reaches the target
/// (loss <= target, or accuracy >= target); records scan in step order and
/// the labels column is nondecreasing, so the first hit is minimal.
inline std::optional<std::size_t> labels_to_match(const LearningCurve& curve,
                                                  double target,
                                                  Metric metric) {
  for (const CurvePoint& pt : curve) {
    const bool hit = metric == Metric::nll ? pt.test_nll <= target
                                           : pt.test_acc >= target;
    if (hit) return pt.labels;
  }
  return std::nullopt;
}

/// Best (lowest) NLL achieved by any record with labels <= budget; the
/// carry-forward learning curve as a function of labels.
inline double best_nll_at(const LearningCurve& curve, std::size_t budget) {
  double best = std::numeric_limits<double>::infinity();
  for (const CurvePoint& pt : curve) {
    if (pt.labels <= budget && pt.test_nll < best) best = pt.test_nll;
  }
  return best;
}

inline double best_acc_at(const LearningCurve& curve, std::size_t budget) {
  double best = -std::numeric_limits<double>::infinity();
  for (const CurvePoint& pt : curve) {
    if (pt.labels <= budget && pt.test_acc > best) best = pt.test_acc;
  }
  return best;
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than 2 values.
inline double stdev_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double standard_error_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return stdev_of(v) / std::sqrt(static_cast<double>(v.size()));
}

/// Geometric mean with a multiplicative one-standard-error band computed on
/// the log scale. Unbounded ratios must be excluded by the caller and
/// reported separately.
struct GeoMean {
  double mean = 0.0;
  double log_se = 0.0;
  std::size_t n = 0;

  double lower() const { return mean * std::exp(-log_se); }
  double upper() const { return mean * std::exp(log_se); }
};

inline GeoMean geometric_mean_ratio(std::span<const double> ratios) {
  if (ratios.empty()) {
    throw std::invalid_argument("geometric_mean_ratio: empty input");
  }
  std::vector<double> logs;
  logs.reserve(ratios.size());
  for (double r : ratios) {
    if (!(r > 0.0) || !std::isfinite(r)) {
      throw std::invalid_argument(
          "geometric_mean_ratio: ratios must be positive and bounded");
    }
    logs.push_back(std::log(r));
  }
  GeoMean out;
  out.n = ratios.size();
  out.mean = std::exp(mean_of(logs));
  out.log_se = standard_error_of(logs);
  return out;
}

}  // namespace ennal
