#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ennal/csv.hpp"
#include "ennal/enn.hpp"
#include "ennal/eval.hpp"
#include "ennal/priority.hpp"
#include "ennal/rng.hpp"

namespace ennal {

/// Training inputs with access-controlled labels and budget accounting.
/// reveal() is the only sanctioned way to obtain a label for the first
/// time; reading an unrevealed label throws and is counted as a violation.
class LabelStore {
 public:
  explicit LabelStore(std::vector<Example> examples)
      : examples_(std::move(examples)), revealed_(examples_.size(), 0) {}

  std::size_t size() const { return examples_.size(); }

  const std::vector<double>& input(std::size_t i) const {
    return examples_.at(i).x;
  }

  /// Returns (label, newly-revealed). Budget is consumed only on first
  /// reveal of an index.
  std::pair<int, bool> reveal(std::size_t i) {
    if (i >= examples_.size()) {
      throw std::out_of_range("LabelStore::reveal: bad index");
    }
    const bool fresh = revealed_[i] == 0;
    if (fresh) {
      revealed_[i] = 1;
      ++reveal_count_;
    }
    return {examples_[i].label, fresh};
  }

  bool is_revealed(std::size_t i) const { return revealed_.at(i) != 0; }

  /// Label of an already-revealed example; anything else is a contract
  /// violation (counted, then rejected).
  int revealed_label(std::size_t i) const {
    if (i >= examples_.size()) {
      throw std::out_of_range("LabelStore::revealed_label: bad index");
    }
    if (!revealed_[i]) {
      ++violations_;
      throw std::logic_error("LabelStore: unauthorized label access");
    }
    return examples_[i].label;
  }

  std::size_t reveal_count() const { return reveal_count_; }
  std::size_t violations() const { return violations_; }

  std::vector<std::size_t> revealed_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < revealed_.size(); ++i) {
      if (revealed_[i]) out.push_back(i);
    }
    return out;
  }

 private:
  std::vector<Example> examples_;
  std::vector<char> revealed_;
  std::size_t reveal_count_ = 0;
  mutable std::size_t violations_ = 0;
};

struct ActiveConfig {
  std::size_t candidate_batch = 0;  // N_B; 0 means the whole training set
  std::size_t select_size = 1;      // n_b
  std::size_t index_samples = 10;   // n_Z for the gradient
  std::size_t steps = 2000;         // S
  double l2_weight = 0.0;           // lambda in the per-term loss
  AdamSettings optimizer;
  PrioritySpec priority;
  std::size_t eval_every = 10;
  bool replay = false;  // train on all revealed examples, not just selected
};

/// N_B candidate indices uniformly without replacement from {0..n-1}.
inline std::vector<std::size_t> sample_candidates(std::size_t n,
                                                  std::size_t n_candidates,
                                                  Rng& rng) {
  if (n_candidates > n) {
    throw std::invalid_argument("sample_candidates: N_B > N");
  }
  return sample_without_replacement(n, n_candidates, rng);
}

/// The k highest-scoring candidates; exact ties break uniformly at random
/// (uniform shuffle, then a stable sort on the score).
inline std::vector<std::size_t> select_top(std::span<const std::size_t> cand,
                                           std::span<const double> scores,
                                           std::size_t k, Rng& rng) {
  if (cand.size() != scores.size()) {
    throw std::invalid_argument("select_top: misaligned candidate/score lists");
  }
  if (k > cand.size()) {
    throw std::invalid_argument("select_top: k > candidate count");
  }
  std::vector<std::size_t> order(cand.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order, rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return scores[a] > scores[b];
                   });
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(cand[order[i]]);
  return out;
}

struct StepReport {
  std::size_t step = 0;
  std::vector<std::size_t> selected;
  std::size_t new_labels = 0;
  double mean_score = 0.0;
};

/// One loop body of the prioritized-SGD algorithm: candidates, scoring with
/// a fresh shared index-sample set, top-k selection, reveal, an independent
/// index-sample set for the gradient, and one optimizer update.
inline StepReport train_step(EnnModel& model, LabelStore& store,
                             const ActiveConfig& cfg, AdamState& opt_state,
                             Rng& rng, std::size_t step_id = 0,
                             CsvWriter* score_dump = nullptr) {
  const std::size_t n = store.size();
  const std::size_t n_b =
      cfg.candidate_batch == 0 ? n : cfg.candidate_batch;
  if (n_b > n) throw std::invalid_argument("train_step: N_B > N");
  if (cfg.select_size < 1 || cfg.select_size > n_b) {
    throw std::invalid_argument("train_step: need 1 <= n_b <= N_B");
  }

  StepReport report;
  report.step = step_id;

  const std::vector<std::size_t> candidates = sample_candidates(n, n_b, rng);
  std::vector<double> scores(candidates.size(), 0.0);
  if (cfg.priority.kind != PriorityKind::uniform) {
    Predictor pred(model,
                   draw_indices(model.ref, cfg.priority.index_samples, rng));
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      scores[i] =
          priority_from_set(cfg.priority.kind, pred.predict(store.input(candidates[i])));
    }
  }
  report.mean_score = scores.empty() ? 0.0 : mean_of(scores);
  if (score_dump) {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      score_dump->row({std::to_string(step_id), std::to_string(candidates[i]),
                       format_double(scores[i])});
    }
  }

  report.selected = select_top(candidates, scores, cfg.select_size, rng);
  std::vector<Example> batch;
  for (std::size_t i : report.selected) {
    const auto [label, fresh] = store.reveal(i);
    if (fresh) ++report.new_labels;
    batch.push_back(Example{i, store.input(i), label});
  }
  if (cfg.replay) {
    for (std::size_t i : store.revealed_indices()) {
      const bool already = std::find(report.selected.begin(),
                                     report.selected.end(),
                                     i) != report.selected.end();
      if (!already) {
        batch.push_back(Example{i, store.input(i), store.revealed_label(i)});
      }
    }
  }

  const std::vector<EpistemicIndex> z_train =
      draw_indices(model.ref, cfg.index_samples, rng);
  const std::vector<double> grad =
      enn_loss_grad(model, batch, z_train, cfg.l2_weight);
  const std::vector<double> params = enn_flatten(model);
  auto [next_params, next_state] = adam_step(opt_state, params, grad);
  opt_state = std::move(next_state);
  enn_set_params(model, next_params);
  return report;
}

using EvalFn = std::function<TestMetrics(const EnnModel&)>;

struct RunSinks {
  CsvWriter* score_dump = nullptr;
  std::ostream* step_log = nullptr;
};

/// S steps of train_step. The eval hook runs at initialization, every
/// eval_every steps, whenever new labels were revealed, and at termination.
inline LearningCurve run_active(EnnModel& model, LabelStore& store,
                                const ActiveConfig& cfg,
                                std::uint64_t run_seed, const EvalFn& eval_fn,
                                RunSinks sinks = {}) {
  if (cfg.eval_every < 1) {
    throw std::invalid_argument("run_active: eval_every >= 1");
  }
  Rng rng(run_seed);
  AdamState opt = make_adam(enn_trainable_count(model), cfg.optimizer);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&] {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - start)
        .count();
  };
  LearningCurve curve;
  auto record = [&](std::size_t step) {
    const TestMetrics m = eval_fn(model);
    curve.push_back(CurvePoint{step, store.reveal_count(),
                               -m.log_likelihood, m.accuracy, elapsed_ms()});
  };
  record(0);
  for (std::size_t s = 1; s <= cfg.steps; ++s) {
    const StepReport rep =
        train_step(model, store, cfg, opt, rng, s, sinks.score_dump);
    if (sinks.step_log) {
      auto& log = *sinks.step_log;
      log << "{\"step\":" << s << ",\"new_labels\":" << rep.new_labels
          << ",\"mean_score\":" << format_double(rep.mean_score)
          << ",\"selected\":[";
      for (std::size_t i = 0; i < rep.selected.size(); ++i) {
        log << (i ? "," : "") << rep.selected[i];
      }
      log << "]}\n";
    }
    if (s % cfg.eval_every == 0 || rep.new_labels > 0 || s == cfg.steps) {
      record(s);
    }
  }
  return curve;
}

}  // namespace ennal
