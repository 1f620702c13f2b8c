#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ennal/active.hpp"
#include "ennal/baseline.hpp"
#include "ennal/enn.hpp"
#include "ennal/eval.hpp"
#include "ennal/priority.hpp"

namespace ennal {

struct ProblemSpec {
  enum class Type { generator, frozen };
  Type type = Type::generator;
  std::size_t input_dim = 10;
  std::size_t classes = 2;
  std::size_t hidden = 50;
  double temperature = 0.1;
  std::size_t train_size = 200;
  std::size_t test_size = 1000;
  std::string path;  // frozen-feature file
};

struct AgentSpec {
  std::string name;
  Arch arch = Arch::mlp;
  std::vector<std::size_t> hidden{50, 50};
  std::size_t ensemble_size = 10;
  double dropout_rate = 0.1;
  std::size_t index_dim = 10;
  double prior_scale = 1.0;
  std::vector<std::size_t> epi_hidden{50, 50};
  double l2_weight = -1.0;  // negative: inherit active.l2_weight
  std::vector<PriorityKind> priorities;
};

struct EvalSpec {
  std::size_t index_samples = 100;
  Metric match_metric = Metric::nll;
};

struct ExperimentConfig {
  ProblemSpec problem;
  std::vector<AgentSpec> agents;
  ActiveConfig active;
  SweepGrid baseline;
  EvalSpec evaluation;
  std::string output_dir = "out";
  std::uint64_t master_seed = 0;
  std::size_t seed_count = 10;
  std::size_t threads = 0;  // 0: hardware concurrency
  bool step_log = false;
  bool export_datasets = false;
  bool save_checkpoints = false;
};

inline EnnConfig agent_enn_config(const AgentSpec& a, std::size_t input_dim,
                                  std::size_t classes) {
  EnnConfig cfg;
  cfg.arch = a.arch;
  cfg.input_dim = input_dim;
  cfg.class_count = classes;
  cfg.hidden = a.hidden;
  cfg.ensemble_size = a.ensemble_size;
  cfg.dropout_rate = a.dropout_rate;
  cfg.index_dim = a.index_dim;
  cfg.prior_scale = a.prior_scale;
  cfg.epi_hidden = a.epi_hidden;
  return cfg;
}

namespace cfgdetail {

using nlohmann::json;

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("config: " + path + ": " + what);
}

inline void check_keys(const json& obj, const std::string& path,
                       const std::set<std::string>& allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) fail(path + "." + key, "unknown key");
  }
}

inline double num(const json& obj, const std::string& path, const char* key,
                  double def, double lo, double hi) {
  if (!obj.contains(key)) return def;
  const auto& v = obj.at(key);
  if (!v.is_number()) fail(path + "." + key, "expected a number");
  const double x = v.get<double>();
  if (x < lo || x > hi) {
    fail(path + "." + key, "out of range [" + format_double(lo) + ", " +
                               format_double(hi) + "]");
  }
  return x;
}

inline std::size_t count(const json& obj, const std::string& path,
                         const char* key, std::size_t def, std::size_t lo,
                         std::size_t hi) {
  if (!obj.contains(key)) return def;
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned() && !v.is_number_integer()) {
    fail(path + "." + key, "expected a nonnegative integer");
  }
  const long long x = v.get<long long>();
  if (x < 0 || static_cast<std::size_t>(x) < lo ||
      static_cast<std::size_t>(x) > hi) {
    fail(path + "." + key, "out of range");
  }
  return static_cast<std::size_t>(x);
}

inline bool flag(const json& obj, const std::string& path, const char* key,
                 bool def) {
  if (!obj.contains(key)) return def;
  if (!obj.at(key).is_boolean()) fail(path + "." + key, "expected a boolean");
  return obj.at(key).get<bool>();
}

inline std::string str(const json& obj, const std::string& path,
                       const char* key, const std::string& def) {
  if (!obj.contains(key)) return def;
  if (!obj.at(key).is_string()) fail(path + "." + key, "expected a string");
  return obj.at(key).get<std::string>();
}

inline std::vector<double> num_list(const json& obj, const std::string& path,
                                    const char* key, std::vector<double> def) {
  if (!obj.contains(key)) return def;
  const auto& v = obj.at(key);
  if (!v.is_array() || v.empty()) fail(path + "." + key, "expected a nonempty array");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) fail(path + "." + key, "expected numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

inline std::vector<std::size_t> count_list(const json& obj,
                                           const std::string& path,
                                           const char* key,
                                           std::vector<std::size_t> def,
                                           bool allow_empty = false) {
  if (!obj.contains(key)) return def;
  const auto& v = obj.at(key);
  if (!v.is_array() || (v.empty() && !allow_empty)) {
    fail(path + "." + key, "expected a nonempty array");
  }
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_integer() && !e.is_number_unsigned()) {
      fail(path + "." + key, "expected nonnegative integers");
    }
    const long long x = e.get<long long>();
    if (x < 1) fail(path + "." + key, "entries must be >= 1");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

/// Objects merge recursively; everything else (arrays, scalars) replaces.
inline json deep_merge(json base, const json& over) {
  if (!base.is_object() || !over.is_object()) return over;
  for (const auto& [key, val] : over.items()) {
    if (base.contains(key) && base[key].is_object() && val.is_object()) {
      base[key] = deep_merge(base[key], val);
    } else {
      base[key] = val;
    }
  }
  return base;
}

}  // namespace cfgdetail

/// Named presets carrying the published defaults: the synthetic-testbed
/// configuration and the frozen-feature batch regime (candidate batch 40,
/// select 4, 10 index samples, learning rate 1e-5).
inline nlohmann::json preset_json(const std::string& name) {
  using nlohmann::json;
  json base;
  base["problem"] = {{"type", "generator"}, {"input_dim", 10},
                     {"classes", 2},        {"hidden", 50},
                     {"temperature", 0.1},  {"train_size", 200},
                     {"test_size", 1000}};
  base["agents"] = json::array(
      {{{"name", "epinet"},
        {"architecture", "epinet"},
        {"index_dim", 10},
        {"prior_scale", 1.0},
        {"priorities", {"variance", "bald", "uniform"}}},
       {{"name", "mlp"},
        {"architecture", "mlp"},
        {"priorities", {"entropy", "margin"}}},
       {{"name", "ensemble"},
        {"architecture", "ensemble"},
        {"ensemble_size", 10},
        {"priorities", {"variance"}}},
       {{"name", "dropout"},
        {"architecture", "dropout"},
        {"dropout_rate", 0.1},
        {"priorities", {"variance"}}}});
  base["active"] = {{"candidate_batch", 0}, {"select_size", 1},
                    {"index_samples", 10},  {"steps", 2000},
                    {"eval_every", 10},     {"replay", false},
                    {"l2_weight", 1e-4}};
  base["optimizer"] = {{"learning_rate", 1e-3}, {"beta1", 0.9},
                       {"beta2", 0.95},         {"epsilon", 1e-8},
                       {"clip_norm", 1.0}};
  base["baseline"] = {{"fractions", {0.01, 0.03, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6,
                                     0.7, 0.8, 0.9, 1.0}},
                      {"batch_sizes", {4, 16, 64}},
                      {"learning_rates", {1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4}},
                      {"l2_weights", {0.0, 1e-3, 1e-2, 1e-1, 1.0}},
                      {"epochs", 10},
                      {"seeds_per_cell", 3}};
  base["evaluation"] = {{"index_samples", 100}, {"match_metric", "nll"}};
  base["output_dir"] = "out";
  base["master_seed"] = 0;
  base["seed_count"] = 10;
  base["threads"] = 0;
  base["step_log"] = false;
  base["export_datasets"] = false;
  base["save_checkpoints"] = false;

  if (name == "testbed-default") return base;
  if (name == "bert-head-surrogate") {
    base["problem"] = {{"type", "frozen_features"}, {"path", ""}};
    base["active"]["candidate_batch"] = 40;
    base["active"]["select_size"] = 4;
    base["optimizer"]["learning_rate"] = 1e-5;
    base["evaluation"]["match_metric"] = "accuracy";
    return base;
  }
  throw std::runtime_error("config: unknown preset '" + name + "'");
}

inline ExperimentConfig config_from_json(const nlohmann::json& user) {
  using namespace cfgdetail;
  const std::string preset_name =
      str(user, "config", "preset", "testbed-default");
  nlohmann::json user_rest = user;
  user_rest.erase("preset");
  const nlohmann::json j = deep_merge(preset_json(preset_name), user_rest);

  check_keys(j, "config",
             {"problem", "agents", "active", "optimizer", "baseline",
              "evaluation", "output_dir", "master_seed", "seed_count",
              "threads", "step_log", "export_datasets", "save_checkpoints"});

  ExperimentConfig cfg;

  const auto& pj = j.at("problem");
  check_keys(pj, "problem",
             {"type", "input_dim", "classes", "hidden", "temperature",
              "train_size", "test_size", "path"});
  const std::string ptype = str(pj, "problem", "type", "generator");
  if (ptype == "generator") {
    cfg.problem.type = ProblemSpec::Type::generator;
  } else if (ptype == "frozen_features") {
    cfg.problem.type = ProblemSpec::Type::frozen;
  } else {
    fail("problem.type", "must be 'generator' or 'frozen_features'");
  }
  cfg.problem.input_dim = count(pj, "problem", "input_dim", 10, 1, 1000000);
  cfg.problem.classes = count(pj, "problem", "classes", 2, 2, 10000);
  cfg.problem.hidden = count(pj, "problem", "hidden", 50, 1, 100000);
  cfg.problem.temperature =
      num(pj, "problem", "temperature", 0.1, 1e-12, 1e12);
  cfg.problem.train_size = count(pj, "problem", "train_size", 200, 1, 10000000);
  cfg.problem.test_size = count(pj, "problem", "test_size", 1000, 1, 10000000);
  cfg.problem.path = str(pj, "problem", "path", "");
  if (cfg.problem.type == ProblemSpec::Type::frozen) {
    if (cfg.problem.path.empty()) fail("problem.path", "required for frozen_features");
    if (!std::filesystem::exists(cfg.problem.path)) {
      fail("problem.path", "file does not exist: " + cfg.problem.path);
    }
  }

  const auto& agents = j.at("agents");
  if (!agents.is_array() || agents.empty()) fail("agents", "expected a nonempty array");
  std::set<std::string> names;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string path = "agents[" + std::to_string(i) + "]";
    const auto& aj = agents[i];
    check_keys(aj, path,
               {"name", "architecture", "hidden", "ensemble_size",
                "dropout_rate", "index_dim", "prior_scale", "epi_hidden",
                "l2_weight", "priorities"});
    AgentSpec a;
    a.name = str(aj, path, "name", "");
    if (a.name.empty()) fail(path + ".name", "required");
    if (!names.insert(a.name).second) fail(path + ".name", "duplicate agent name");
    a.arch = arch_from_name(str(aj, path, "architecture", "mlp"));
    a.hidden = count_list(aj, path, "hidden", {50, 50}, true);
    a.ensemble_size = count(aj, path, "ensemble_size", 10, 1, 10000);
    a.dropout_rate = num(aj, path, "dropout_rate", 0.1, 0.0, 0.999999);
    a.index_dim = count(aj, path, "index_dim", 10, 1, 100000);
    a.prior_scale = num(aj, path, "prior_scale", 1.0, 0.0, 1e9);
    a.epi_hidden = count_list(aj, path, "epi_hidden", {50, 50}, true);
    a.l2_weight = num(aj, path, "l2_weight", -1.0, -1.0, 1e9);
    if (!aj.contains("priorities")) fail(path + ".priorities", "required");
    for (const auto& pr : aj.at("priorities")) {
      if (!pr.is_string()) fail(path + ".priorities", "expected strings");
      a.priorities.push_back(priority_from_name(pr.get<std::string>()));
    }
    if (a.priorities.empty()) fail(path + ".priorities", "must be nonempty");
    cfg.agents.push_back(std::move(a));
  }

  const auto& act = j.at("active");
  check_keys(act, "active",
             {"candidate_batch", "select_size", "index_samples", "steps",
              "eval_every", "replay", "l2_weight"});
  cfg.active.candidate_batch =
      count(act, "active", "candidate_batch", 0, 0, 10000000);
  cfg.active.select_size = count(act, "active", "select_size", 1, 1, 1000000);
  cfg.active.index_samples =
      count(act, "active", "index_samples", 10, 1, 1000000);
  cfg.active.steps = count(act, "active", "steps", 2000, 0, 100000000);
  cfg.active.eval_every = count(act, "active", "eval_every", 10, 1, 100000000);
  cfg.active.replay = flag(act, "active", "replay", false);
  cfg.active.l2_weight = num(act, "active", "l2_weight", 1e-4, 0.0, 1e9);

  const auto& opt = j.at("optimizer");
  check_keys(opt, "optimizer",
             {"learning_rate", "beta1", "beta2", "epsilon", "clip_norm"});
  cfg.active.optimizer.learning_rate =
      num(opt, "optimizer", "learning_rate", 1e-3, 1e-15, 1e3);
  cfg.active.optimizer.beta1 = num(opt, "optimizer", "beta1", 0.9, 0.0, 0.999999);
  cfg.active.optimizer.beta2 =
      num(opt, "optimizer", "beta2", 0.95, 0.0, 0.999999);
  cfg.active.optimizer.epsilon = num(opt, "optimizer", "epsilon", 1e-8, 0.0, 1.0);
  cfg.active.optimizer.clip_norm =
      num(opt, "optimizer", "clip_norm", 1.0, 0.0, 1e12);

  const auto& bj = j.at("baseline");
  check_keys(bj, "baseline",
             {"fractions", "batch_sizes", "learning_rates", "l2_weights",
              "epochs", "seeds_per_cell"});
  cfg.baseline.fractions = num_list(bj, "baseline", "fractions",
                                    cfg.baseline.fractions);
  for (double f : cfg.baseline.fractions) {
    if (!(f > 0.0) || f > 1.0) fail("baseline.fractions", "entries must be in (0,1]");
  }
  cfg.baseline.batch_sizes =
      count_list(bj, "baseline", "batch_sizes", cfg.baseline.batch_sizes);
  cfg.baseline.learning_rates = num_list(bj, "baseline", "learning_rates",
                                         cfg.baseline.learning_rates);
  cfg.baseline.l2_weights =
      num_list(bj, "baseline", "l2_weights", cfg.baseline.l2_weights);
  for (double w : cfg.baseline.l2_weights) {
    if (w < 0.0) fail("baseline.l2_weights", "entries must be >= 0");
  }
  cfg.baseline.epochs = count(bj, "baseline", "epochs", 10, 0, 100000);
  cfg.baseline.seeds_per_cell =
      count(bj, "baseline", "seeds_per_cell", 3, 1, 1000);

  const auto& ej = j.at("evaluation");
  check_keys(ej, "evaluation", {"index_samples", "match_metric"});
  cfg.evaluation.index_samples =
      count(ej, "evaluation", "index_samples", 100, 1, 1000000);
  const std::string metric = str(ej, "evaluation", "match_metric", "nll");
  if (metric == "nll") {
    cfg.evaluation.match_metric = Metric::nll;
  } else if (metric == "accuracy") {
    cfg.evaluation.match_metric = Metric::accuracy;
  } else {
    fail("evaluation.match_metric", "must be 'nll' or 'accuracy'");
  }

  cfg.output_dir = str(j, "config", "output_dir", "out");
  cfg.master_seed = static_cast<std::uint64_t>(
      count(j, "config", "master_seed", 0, 0, ~std::uint64_t{0} >> 1));
  cfg.seed_count = count(j, "config", "seed_count", 10, 1, 10000);
  cfg.threads = count(j, "config", "threads", 0, 0, 4096);
  cfg.step_log = flag(j, "config", "step_log", false);
  cfg.export_datasets = flag(j, "config", "export_datasets", false);
  cfg.save_checkpoints = flag(j, "config", "save_checkpoints", false);

  if (cfg.problem.type == ProblemSpec::Type::generator &&
      cfg.active.candidate_batch > cfg.problem.train_size) {
    fail("active.candidate_batch", "exceeds problem.train_size");
  }
  if (cfg.active.candidate_batch != 0 &&
      cfg.active.select_size > cfg.active.candidate_batch) {
    fail("active.select_size", "exceeds active.candidate_batch");
  }
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open file: " + path);
  nlohmann::json user;
  try {
    in >> user;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: " + path + ": " + e.what());
  }
  return config_from_json(user);
}

/// Canonical resolved form; the manifest hash is taken over this string,
/// so it changes exactly when some effective field changes.
inline std::string config_canonical_json(const ExperimentConfig& c) {
  using nlohmann::json;
  json j;
  j["problem"]["type"] =
      c.problem.type == ProblemSpec::Type::generator ? "generator"
                                                     : "frozen_features";
  j["problem"]["input_dim"] = c.problem.input_dim;
  j["problem"]["classes"] = c.problem.classes;
  j["problem"]["hidden"] = c.problem.hidden;
  j["problem"]["temperature"] = c.problem.temperature;
  j["problem"]["train_size"] = c.problem.train_size;
  j["problem"]["test_size"] = c.problem.test_size;
  j["problem"]["path"] = c.problem.path;
  j["agents"] = json::array();
  for (const auto& a : c.agents) {
    json aj;
    aj["name"] = a.name;
    aj["architecture"] = arch_name(a.arch);
    aj["hidden"] = a.hidden;
    aj["ensemble_size"] = a.ensemble_size;
    aj["dropout_rate"] = a.dropout_rate;
    aj["index_dim"] = a.index_dim;
    aj["prior_scale"] = a.prior_scale;
    aj["epi_hidden"] = a.epi_hidden;
    aj["l2_weight"] = a.l2_weight;
    json prios = json::array();
    for (PriorityKind p : a.priorities) prios.push_back(priority_name(p));
    aj["priorities"] = std::move(prios);
    j["agents"].push_back(std::move(aj));
  }
  j["active"] = {{"candidate_batch", c.active.candidate_batch},
                 {"select_size", c.active.select_size},
                 {"index_samples", c.active.index_samples},
                 {"steps", c.active.steps},
                 {"eval_every", c.active.eval_every},
                 {"replay", c.active.replay},
                 {"l2_weight", c.active.l2_weight}};
  j["optimizer"] = {{"learning_rate", c.active.optimizer.learning_rate},
                    {"beta1", c.active.optimizer.beta1},
                    {"beta2", c.active.optimizer.beta2},
                    {"epsilon", c.active.optimizer.epsilon},
                    {"clip_norm", c.active.optimizer.clip_norm}};
  j["baseline"] = {{"fractions", c.baseline.fractions},
                   {"batch_sizes", c.baseline.batch_sizes},
                   {"learning_rates", c.baseline.learning_rates},
                   {"l2_weights", c.baseline.l2_weights},
                   {"epochs", c.baseline.epochs},
                   {"seeds_per_cell", c.baseline.seeds_per_cell}};
  j["evaluation"] = {{"index_samples", c.evaluation.index_samples},
                     {"match_metric", metric_name(c.evaluation.match_metric)}};
  j["output_dir"] = c.output_dir;
  j["master_seed"] = c.master_seed;
  j["seed_count"] = c.seed_count;
  j["step_log"] = c.step_log;
  j["export_datasets"] = c.export_datasets;
  j["save_checkpoints"] = c.save_checkpoints;
  return j.dump(1);
}

inline std::uint64_t config_hash(const ExperimentConfig& c) {
  return fnv1a64(config_canonical_json(c));
}

/// Frozen-feature ingestion: the documented delimited format with a
/// width/class-count header row (see dataset.hpp).
inline Dataset ingest_features(const std::string& path) {
  Dataset ds = read_dataset_csv(path);
  if (ds.train.empty()) {
    throw std::runtime_error(path + ": no training examples in dataset");
  }
  if (ds.test.empty()) {
    throw std::runtime_error(path + ": no test examples in dataset");
  }
  return ds;
}

}  // namespace ennal
