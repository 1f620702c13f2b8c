#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ennal/dataset.hpp"
#include "ennal/numerics.hpp"
#include "ennal/rng.hpp"

namespace ennal {

/// Frozen random-MLP generative model: labels drawn from
/// softmax(h(x) / temperature) with h a 2-hidden-layer ReLU net.
struct GenerativeModel {
  MlpParams truth;
  double temperature = 0.1;
  std::size_t input_dim = 10;
  std::size_t class_count = 2;
  std::uint64_t seed = 0;
};

inline GenerativeModel make_model(std::uint64_t seed, std::size_t input_dim,
                                  std::size_t class_count, std::size_t hidden,
                                  double temperature) {
  if (input_dim < 1 || class_count < 2 || hidden < 1) {
    throw std::invalid_argument("make_model: invalid dimensions");
  }
  if (temperature <= 0.0) {
    throw std::invalid_argument("make_model: temperature must be > 0");
  }
  GenerativeModel m;
  m.temperature = temperature;
  m.input_dim = input_dim;
  m.class_count = class_count;
  m.seed = seed;
  const std::size_t dims[] = {input_dim, hidden, hidden, class_count};
  Rng theta_rng(derive_seed(seed, "theta"));
  m.truth = mlp_init(dims, theta_rng);
  return m;
}

/// D i.i.d. standard-normal coordinates.
inline std::vector<double> sample_input(const GenerativeModel& m, Rng& rng) {
  std::vector<double> x(m.input_dim);
  for (double& v : x) v = rng.normal();
  return x;
}

inline std::vector<double> label_probs(const GenerativeModel& m,
                                       std::span<const double> x) {
  if (x.size() != m.input_dim) {
    throw std::invalid_argument("label_probs: input width mismatch");
  }
  std::vector<double> logits = mlp_forward(m.truth, x);
  for (double& v : logits) v /= m.temperature;
  return softmax(logits);
}

inline int sample_label(const GenerativeModel& m, std::span<const double> x,
                        Rng& rng) {
  const std::vector<double> p = label_probs(m, x);
  const double u = rng.uniform();
  double cum = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    cum += p[c];
    if (u < cum) return static_cast<int>(c);
  }
  return static_cast<int>(p.size()) - 1;
}

/// Train and test sets drawn on independent derived streams, so sizes can
/// vary without perturbing each other or theta*.
inline Dataset sample_dataset(const GenerativeModel& m, std::size_t n_train,
                              std::size_t n_test, std::uint64_t data_seed) {
  if (n_train < 1 || n_test < 1) {
    throw std::invalid_argument("sample_dataset: sizes must be >= 1");
  }
  Dataset ds;
  ds.feature_dim = m.input_dim;
  ds.class_count = static_cast<int>(m.class_count);
  auto fill = [&](std::vector<Example>& out, std::size_t n, const char* xtag,
                  const char* ytag) {
    Rng x_rng(derive_seed(data_seed, xtag));
    Rng y_rng(derive_seed(data_seed, ytag));
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Example e;
      e.index = i;
      e.x = sample_input(m, x_rng);
      e.label = sample_label(m, e.x, y_rng);
      out.push_back(std::move(e));
    }
  };
  fill(ds.train, n_train, "train_inputs", "train_labels");
  fill(ds.test, n_test, "test_inputs", "test_labels");
  return ds;
}

/// Mean negative log-likelihood of the true model on a test set, with the
/// standard error over examples. Lower-bounds (in expectation) the test
/// loss any agent can achieve on data from this model.
inline std::pair<double, double> bayes_oracle_nll(
    const GenerativeModel& m, std::span<const Example> test) {
  if (test.empty()) throw std::invalid_argument("bayes_oracle_nll: empty test");
  double sum = 0.0, sumsq = 0.0;
  for (const Example& e : test) {
    const std::vector<double> p = label_probs(m, e.x);
    const double nll = -std::log(std::max(p[e.label], 1e-12));
    sum += nll;
    sumsq += nll * nll;
  }
  const double n = static_cast<double>(test.size());
  const double mean = sum / n;
  const double var = std::max(0.0, (sumsq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

}  // namespace ennal
