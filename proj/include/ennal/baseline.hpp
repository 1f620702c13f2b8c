#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ennal/dataset.hpp"
#include "ennal/enn.hpp"
#include "ennal/eval.hpp"
#include "ennal/rng.hpp"

namespace ennal {

/// Hyperparameter sweep for the tuned supervised reference.
struct SweepGrid {
  std::vector<double> fractions{0.01, 0.03, 0.1, 0.2, 0.3, 0.4,
                                0.5,  0.6,  0.7, 0.8, 0.9, 1.0};
  std::vector<std::size_t> batch_sizes{4, 16, 64};
  std::vector<double> learning_rates{1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4};
  std::vector<double> l2_weights{0.0, 1e-3, 1e-2, 1e-1, 1.0};
  std::size_t epochs = 10;
  std::size_t seeds_per_cell = 3;
};

inline std::vector<std::size_t> subsample_indices(std::size_t n, double psi,
                                                  Rng& rng) {
  if (!(psi > 0.0) || psi > 1.0) {
    throw std::invalid_argument("subsample: psi must be in (0, 1]");
  }
  const std::size_t k = static_cast<std::size_t>(
      std::ceil(psi * static_cast<double>(n)));
  return sample_without_replacement(n, std::max<std::size_t>(1, k), rng);
}

/// Uniform without-replacement fraction of the training split; the test
/// split is carried through unchanged.
inline Dataset subsample(const Dataset& ds, double psi, Rng& rng) {
  Dataset out;
  out.feature_dim = ds.feature_dim;
  out.class_count = ds.class_count;
  out.test = ds.test;
  for (std::size_t i : subsample_indices(ds.train.size(), psi, rng)) {
    out.train.push_back(ds.train[i]);
  }
  return out;
}

struct TracePoint {
  std::size_t step = 0;
  double nll = 0.0;
  double acc = 0.0;
};

/// Batched plain-MLP test evaluation; the feature matrix is built once and
/// each call runs three dense products instead of a per-example loop.
class BatchedTestEval {
 public:
  explicit BatchedTestEval(std::span<const Example> test)
      : n_(test.size()) {
    if (test.empty()) throw std::invalid_argument("BatchedTestEval: empty");
    dim_ = test[0].x.size();
    x_ = Matrix(n_, dim_);
    labels_.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      std::copy(test[i].x.begin(), test[i].x.end(), x_.row(i));
      labels_.push_back(test[i].label);
    }
  }

  TestMetrics operator()(const MlpParams& p) const {
    Matrix a = x_;
    Matrix b, wt;
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
      const DenseLayer& layer = p.layers[l];
      transpose_into(layer.w, wt);
      b = Matrix(n_, layer.w.rows);
      for (std::size_t i = 0; i < n_; ++i) {
        std::copy(layer.b.begin(), layer.b.end(), b.row(i));
      }
      matmul_acc(a.data.data(), wt.data.data(), b.data.data(), n_, a.cols,
                 layer.w.rows);
      if (l + 1 < p.layers.size()) {
        for (double& v : b.data) v = v > 0.0 ? v : 0.0;
      }
      std::swap(a, b);
    }
    const std::size_t c = p.output_dim();
    double ll = 0.0;
    std::size_t correct = 0;
    std::vector<double> row(c);
    for (std::size_t i = 0; i < n_; ++i) {
      const double* logits = a.row(i);
      double m = logits[0];
      std::size_t top = 0;
      for (std::size_t j = 1; j < c; ++j) {
        if (logits[j] > m) {
          m = logits[j];
          top = j;
        }
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < c; ++j) sum += std::exp(logits[j] - m);
      const double lp = logits[labels_[i]] - m - std::log(sum);
      ll += std::max(lp, std::log(1e-12));
      if (top == static_cast<std::size_t>(labels_[i])) ++correct;
    }
    TestMetrics out;
    out.n_test = n_;
    out.log_likelihood = ll / static_cast<double>(n_);
    out.accuracy = static_cast<double>(correct) / static_cast<double>(n_);
    return out;
  }

 private:
  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  Matrix x_;
  std::vector<int> labels_;
};

using MlpEvalFn = std::function<TestMetrics(const MlpParams&)>;

/// Plain minibatch supervised training with Adam: per-epoch shuffling,
/// summed per-item loss (each item carrying its own L2 term), evaluation at
/// initialization, every ceil(steps_per_epoch / 4) steps, and at epoch
/// boundaries. Returns the full metric trace for hindsight selection.
inline std::vector<TracePoint> supervised_train_eval(
    MlpParams model, std::span<const Example> train,
    std::size_t batch_size, double learning_rate, double l2,
    std::size_t epochs, AdamSettings opt_settings, std::uint64_t shuffle_seed,
    const MlpEvalFn& eval_fn) {
  if (train.empty()) throw std::invalid_argument("supervised: empty train set");
  if (batch_size == 0) throw std::invalid_argument("supervised: batch size");
  opt_settings.learning_rate = learning_rate;

  std::vector<double> params(model.param_count());
  copy_params_to_flat(model, params.data());
  AdamState opt = make_adam(params.size(), opt_settings);
  Rng shuffle_rng(shuffle_seed);

  std::vector<TracePoint> trace;
  std::size_t global_step = 0;
  auto record = [&] {
    const TestMetrics m = eval_fn(model);
    trace.push_back(TracePoint{global_step, -m.log_likelihood, m.accuracy});
  };
  record();

  const std::size_t n = train.size();
  const std::size_t steps_per_epoch = (n + batch_size - 1) / batch_size;
  const std::size_t cadence =
      std::max<std::size_t>(1, (steps_per_epoch + 3) / 4);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<double> grad(params.size());
  MlpTrace t;
  std::vector<double> up;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t end = std::min(n, start + batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const Example& ex = train[order[b]];
        mlp_forward_trace(model, ex.x, t);
        up = softmax(t.acts.back());
        up[ex.label] -= 1.0;
        mlp_backward_acc(model, t, up, grad.data());
      }
      if (l2 > 0.0) {
        const double coeff = 2.0 * l2 * static_cast<double>(end - start);
        for (std::size_t i = 0; i < grad.size(); ++i) {
          grad[i] += coeff * params[i];
        }
      }
      auto [next, state] = adam_step(opt, params, grad);
      params = std::move(next);
      opt = std::move(state);
      copy_params_from_flat(model, params.data());
      ++global_step;
      const bool boundary = end == n;
      if (global_step % cadence == 0 || boundary) record();
    }
  }
  return trace;
}

/// Per-fraction summary of the best-step-in-hindsight baseline.
struct FractionRecord {
  std::size_t labels = 0;
  double mean_best_nll = 0.0;
  double se_nll = 0.0;
  double mean_best_acc = 0.0;
  double se_acc = 0.0;
};

using BaselineCurve = std::vector<FractionRecord>;

/// Best trace point under the selection metric; accuracy rides along from
/// the same point.
inline TracePoint best_trace_point(std::span<const TracePoint> trace,
                                   Metric selection) {
  TracePoint best = trace[0];
  for (const TracePoint& pt : trace) {
    const bool better = selection == Metric::nll ? pt.nll < best.nll
                                                 : pt.acc > best.acc;
    if (better) best = pt;
  }
  return best;
}

/// Fresh subsample per (fraction, seed); per-seed best over every grid cell
/// and evaluated step; mean and standard error over seeds.
inline BaselineCurve run_baseline(const Dataset& ds, const SweepGrid& grid,
                                  std::span<const std::size_t> hidden,
                                  AdamSettings opt_settings,
                                  std::uint64_t seed,
                                  Metric selection = Metric::nll,
                                  GlorotVariant init = GlorotVariant::uniform) {
  if (grid.fractions.empty() || grid.batch_sizes.empty() ||
      grid.learning_rates.empty() || grid.l2_weights.empty() ||
      grid.seeds_per_cell == 0) {
    throw std::invalid_argument("run_baseline: empty grid");
  }
  const BatchedTestEval eval_fn(ds.test);
  std::vector<std::size_t> dims;
  dims.push_back(ds.feature_dim);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(static_cast<std::size_t>(ds.class_count));

  BaselineCurve curve;
  for (std::size_t fi = 0; fi < grid.fractions.size(); ++fi) {
    const double psi = grid.fractions[fi];
    std::vector<double> best_nll, best_acc;
    for (std::size_t s = 0; s < grid.seeds_per_cell; ++s) {
      Rng sub_rng(derive_seed(seed, "subsample", fi * 1000 + s));
      std::vector<Example> sub;
      for (std::size_t i : subsample_indices(ds.train.size(), psi, sub_rng)) {
        sub.push_back(ds.train[i]);
      }
      TracePoint seed_best{0, 1e300, -1.0};
      std::size_t cell_id = 0;
      for (std::size_t batch : grid.batch_sizes) {
        for (double lr : grid.learning_rates) {
          for (double l2 : grid.l2_weights) {
            const std::uint64_t cell_seed =
                derive_seed(seed, "cell", fi * 1000000 + s * 10000 + cell_id);
            ++cell_id;
            Rng init_rng(derive_seed(cell_seed, "init"));
            MlpParams model = mlp_init(dims, init_rng, init);
            const auto trace = supervised_train_eval(
                std::move(model), sub, batch, lr, l2, grid.epochs,
                opt_settings, derive_seed(cell_seed, "shuffle"), eval_fn);
            const TracePoint cell_best = best_trace_point(trace, selection);
            const bool better = selection == Metric::nll
                                    ? cell_best.nll < seed_best.nll
                                    : cell_best.acc > seed_best.acc;
            if (better) seed_best = cell_best;
          }
        }
      }
      best_nll.push_back(seed_best.nll);
      best_acc.push_back(seed_best.acc);
    }
    FractionRecord rec;
    rec.labels = static_cast<std::size_t>(std::ceil(
        psi * static_cast<double>(ds.train.size())));
    rec.mean_best_nll = mean_of(best_nll);
    rec.se_nll = standard_error_of(best_nll);
    rec.mean_best_acc = mean_of(best_acc);
    rec.se_acc = standard_error_of(best_acc);
    curve.push_back(rec);
  }
  return curve;
}

}  // namespace ennal
