#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ennal/active.hpp"
#include "ennal/checkpoint.hpp"
#include "ennal/config.hpp"
#include "ennal/csv.hpp"
#include "ennal/generator.hpp"

namespace ennal {

inline std::string cell_name(const std::string& agent,
                             const std::string& priority) {
  return agent + "-" + priority;
}

/// Collision-free per-cell seed: hash(master seed, agent, priority, index).
inline std::uint64_t cell_seed(std::uint64_t master, const std::string& agent,
                               const std::string& priority, std::size_t k) {
  std::uint64_t h = derive_seed(master, "cell");
  h = fnv1a64(agent, h);
  h = fnv1a64("/", h);
  h = fnv1a64(priority, h);
  return mix_seed(h, k);
}

inline void write_curve_csv(const LearningCurve& curve,
                            const std::string& path) {
  CsvWriter w(path);
  w.raw_line("step,labels,test_nll,test_acc,wall_ms");
  for (const CurvePoint& pt : curve) {
    w.row({std::to_string(pt.step), std::to_string(pt.labels),
           format_double(pt.test_nll), format_double(pt.test_acc),
           format_double(pt.wall_ms)});
  }
}

inline LearningCurve read_curve_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "step,labels,test_nll,test_acc,wall_ms") {
    throw std::runtime_error(path + ": not a learning-curve file");
  }
  LearningCurve curve;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_fields(lines[i]);
    if (f.size() != 5) throw std::runtime_error(path + ": malformed row");
    CurvePoint pt;
    pt.step = static_cast<std::size_t>(parse_int(f[0], path));
    pt.labels = static_cast<std::size_t>(parse_int(f[1], path));
    pt.test_nll = parse_double(f[2], path);
    pt.test_acc = parse_double(f[3], path);
    pt.wall_ms = parse_double(f[4], path);
    curve.push_back(pt);
  }
  return curve;
}

inline void write_baseline_csv(const BaselineCurve& curve,
                               const std::string& path) {
  CsvWriter w(path);
  w.raw_line("labels,mean_best_nll,se_nll,mean_best_acc,se_acc");
  for (const FractionRecord& r : curve) {
    w.row({std::to_string(r.labels), format_double(r.mean_best_nll),
           format_double(r.se_nll), format_double(r.mean_best_acc),
           format_double(r.se_acc)});
  }
}

inline BaselineCurve read_baseline_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.empty() ||
      lines[0] != "labels,mean_best_nll,se_nll,mean_best_acc,se_acc") {
    throw std::runtime_error(path + ": not a baseline-curve file");
  }
  BaselineCurve curve;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_fields(lines[i]);
    if (f.size() != 5) throw std::runtime_error(path + ": malformed row");
    FractionRecord r;
    r.labels = static_cast<std::size_t>(parse_int(f[0], path));
    r.mean_best_nll = parse_double(f[1], path);
    r.se_nll = parse_double(f[2], path);
    r.mean_best_acc = parse_double(f[3], path);
    r.se_acc = parse_double(f[4], path);
    curve.push_back(r);
  }
  return curve;
}

/// Runs independent tasks on a small worker pool; every task owns its
/// seeds, so scheduling order never changes any output.
inline std::vector<std::string> run_parallel(
    std::vector<std::function<void()>>& tasks, std::size_t threads) {
  std::vector<std::string> failures;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        tasks[i]();
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        failures.push_back(e.what());
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return failures;
}

struct SuiteResult {
  std::filesystem::path dir;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

namespace suitedetail {

inline std::vector<std::size_t> baseline_hidden(const ExperimentConfig& cfg) {
  for (const auto& a : cfg.agents) {
    if (a.arch == Arch::mlp) return a.hidden;
  }
  return {50, 50};
}

inline bool cell_matches(const std::string& filter, const std::string& agent,
                         const std::string& priority) {
  return filter.empty() || filter == agent + ":" + priority ||
         filter == cell_name(agent, priority);
}

}  // namespace suitedetail

/// Runs the whole experiment grid: per-problem baselines plus one active
/// run per (agent, priority, problem seed), then the efficiency report and
/// figure data. Cells execute in parallel; artifacts depend only on the
/// resolved config and master seed.
inline SuiteResult run_suite(const ExperimentConfig& cfg,
                             const std::string& cell_filter = "") {
  namespace fs = std::filesystem;
  SuiteResult result;
  const fs::path out(cfg.output_dir);
  fs::create_directories(out / "curves");
  fs::create_directories(out / "baseline");
  fs::create_directories(out / "problems");
  fs::create_directories(out / "report");
  fs::create_directories(out / "plots");

  {
    std::ofstream f(out / "config_resolved.json", std::ios::binary);
    f << config_canonical_json(cfg) << '\n';
  }
  {
    nlohmann::json manifest;
    manifest["format"] = "ennal-suite-manifest";
    manifest["version"] = 1;
    manifest["library"] = "ennal 0.1.0";
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    manifest["config_hash"] = hex;
    manifest["master_seed"] = cfg.master_seed;
    manifest["seed_count"] = cfg.seed_count;
    manifest["match_metric"] = metric_name(cfg.evaluation.match_metric);
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& a : cfg.agents) {
      for (PriorityKind p : a.priorities) {
        if (!suitedetail::cell_matches(cell_filter, a.name, priority_name(p))) {
          continue;
        }
        cells.push_back({{"agent", a.name}, {"priority", priority_name(p)}});
      }
    }
    manifest["cells"] = std::move(cells);
    std::ofstream f(out / "manifest.json", std::ios::binary);
    f << manifest.dump(1) << '\n';
  }

  // Problem instances: one generative model and dataset per problem seed,
  // shared by every agent and the baseline on that seed.
  std::vector<Dataset> datasets;
  const bool generator_problem =
      cfg.problem.type == ProblemSpec::Type::generator;
  if (generator_problem) {
    CsvWriter oracle((out / "problems" / "oracle.csv").string());
    oracle.raw_line("problem,oracle_nll,oracle_se");
    for (std::size_t k = 0; k < cfg.seed_count; ++k) {
      const std::uint64_t pseed = derive_seed(cfg.master_seed, "problem", k);
      const GenerativeModel gm =
          make_model(pseed, cfg.problem.input_dim, cfg.problem.classes,
                     cfg.problem.hidden, cfg.problem.temperature);
      Dataset ds = sample_dataset(gm, cfg.problem.train_size,
                                  cfg.problem.test_size,
                                  derive_seed(pseed, "data"));
      const auto [o_nll, o_se] = bayes_oracle_nll(gm, ds.test);
      oracle.row({std::to_string(k), format_double(o_nll),
                  format_double(o_se)});
      if (cfg.export_datasets) {
        write_dataset_csv(ds, (out / "problems" /
                               ("seed" + std::to_string(k) + "_dataset.csv"))
                                  .string());
      }
      datasets.push_back(std::move(ds));
    }
  } else {
    const Dataset shared = ingest_features(cfg.problem.path);
    for (std::size_t k = 0; k < cfg.seed_count; ++k) datasets.push_back(shared);
  }
  const std::size_t classes = static_cast<std::size_t>(datasets[0].class_count);
  const std::size_t feat_dim = datasets[0].feature_dim;

  std::vector<std::function<void()>> tasks;

  // Baseline sweep per problem.
  const auto bl_hidden = suitedetail::baseline_hidden(cfg);
  for (std::size_t k = 0; k < cfg.seed_count; ++k) {
    tasks.push_back([&cfg, &datasets, bl_hidden, k, out] {
      const BaselineCurve curve = run_baseline(
          datasets[k], cfg.baseline, bl_hidden, cfg.active.optimizer,
          derive_seed(cfg.master_seed, "baseline", k),
          cfg.evaluation.match_metric);
      write_baseline_csv(curve, (out / "baseline" /
                                 ("seed" + std::to_string(k) + ".csv"))
                                    .string());
    });
  }

  // Active-learning cells.
  for (const auto& agent : cfg.agents) {
    for (PriorityKind prio : agent.priorities) {
      const std::string pname = priority_name(prio);
      if (!suitedetail::cell_matches(cell_filter, agent.name, pname)) continue;
      const fs::path cell_dir = out / "curves" / cell_name(agent.name, pname);
      fs::create_directories(cell_dir);
      for (std::size_t k = 0; k < cfg.seed_count; ++k) {
        tasks.push_back([&cfg, &datasets, agent, prio, pname, k, cell_dir,
                         classes, feat_dim] {
          const std::uint64_t cseed =
              cell_seed(cfg.master_seed, agent.name, pname, k);
          EnnModel model = make_enn(agent_enn_config(agent, feat_dim, classes),
                                    derive_seed(cseed, "init"));
          LabelStore store(datasets[k].train);
          ActiveConfig acfg = cfg.active;
          acfg.priority = PrioritySpec{prio, cfg.active.index_samples};
          if (agent.l2_weight >= 0.0) acfg.l2_weight = agent.l2_weight;

          std::vector<EpistemicIndex> eval_set;
          if (model.ref.kind == ReferenceDistribution::Kind::discrete) {
            eval_set = exhaustive_indices(model.ref);
          } else {
            Rng eval_rng(derive_seed(cseed, "eval"));
            eval_set =
                draw_indices(model.ref, cfg.evaluation.index_samples, eval_rng);
          }
          const std::vector<Example>& test = datasets[k].test;
          const EvalFn hook = [&model, &test, &eval_set](const EnnModel& m) {
            return evaluate(m, test, eval_set);
          };

          std::ofstream step_log;
          RunSinks sinks;
          if (cfg.step_log) {
            step_log.open(cell_dir / ("seed" + std::to_string(k) +
                                      ".steps.jsonl"),
                          std::ios::binary);
            sinks.step_log = &step_log;
          }
          const LearningCurve curve =
              run_active(model, store, acfg, derive_seed(cseed, "run"), hook,
                         sinks);
          if (store.violations() != 0) {
            throw std::runtime_error("label-access violation in cell " +
                                     cell_name(agent.name, pname));
          }
          write_curve_csv(curve, (cell_dir /
                                  ("seed" + std::to_string(k) + ".csv"))
                                     .string());
          if (cfg.save_checkpoints) {
            save_checkpoint(model, (cell_dir / ("seed" + std::to_string(k) +
                                                ".ckpt.json"))
                                       .string());
          }
        });
      }
    }
  }

  const std::size_t threads =
      cfg.threads != 0 ? cfg.threads
                       : std::max(1u, std::thread::hardware_concurrency());
  result.failures = run_parallel(tasks, threads);
  result.dir = out;
  if (!result.failures.empty()) {
    std::ofstream f(out / "report" / "failures.txt", std::ios::binary);
    for (const auto& msg : result.failures) f << msg << '\n';
  }
  return result;
}

}  // namespace ennal
