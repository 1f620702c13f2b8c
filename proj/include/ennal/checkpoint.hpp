#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "ennal/enn.hpp"

namespace ennal {

namespace detail {

inline nlohmann::json params_to_json(const MlpParams& p) {
  std::vector<double> flat(p.param_count());
  copy_params_to_flat(p, flat.data());
  return nlohmann::json(flat);
}

inline void params_from_json(const nlohmann::json& j, MlpParams& p) {
  const auto flat = j.get<std::vector<double>>();
  if (flat.size() != p.param_count()) {
    throw std::runtime_error("checkpoint: parameter count mismatch");
  }
  copy_params_from_flat(p, flat.data());
}

}  // namespace detail

/// Versioned text checkpoint: architecture tag, shape metadata, parameter
/// arrays in layer order (each layer's weights row-major, then biases),
/// and the prior seed. Doubles use shortest round-trip encoding, so
/// save -> load -> save is bit-exact.
inline void save_checkpoint(const EnnModel& m, const std::string& path) {
  nlohmann::json j;
  j["format"] = "ennal-checkpoint";
  j["version"] = 1;
  j["architecture"] = arch_name(m.cfg.arch);
  j["input_dim"] = m.cfg.input_dim;
  j["class_count"] = m.cfg.class_count;
  j["hidden"] = m.cfg.hidden;
  j["ensemble_size"] = m.cfg.ensemble_size;
  j["dropout_rate"] = m.cfg.dropout_rate;
  j["index_dim"] = m.cfg.index_dim;
  j["prior_scale"] = m.cfg.prior_scale;
  j["epi_hidden"] = m.cfg.epi_hidden;
  j["init"] = m.cfg.init == GlorotVariant::uniform ? "uniform" : "normal";
  j["prior_seed"] = m.prior_seed;
  nlohmann::json base = nlohmann::json::array();
  for (const auto& net : m.base) base.push_back(detail::params_to_json(net));
  j["base"] = std::move(base);
  if (m.cfg.arch == Arch::epinet) {
    j["epi_train"] = detail::params_to_json(m.epi_train);
    j["epi_prior"] = detail::params_to_json(m.epi_prior);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump(1) << '\n';
}

inline EnnModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != "ennal-checkpoint" || j.value("version", 0) != 1) {
    throw std::runtime_error("checkpoint: unrecognized format/version");
  }
  EnnConfig cfg;
  cfg.arch = arch_from_name(j.at("architecture").get<std::string>());
  cfg.input_dim = j.at("input_dim").get<std::size_t>();
  cfg.class_count = j.at("class_count").get<std::size_t>();
  cfg.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  cfg.ensemble_size = j.at("ensemble_size").get<std::size_t>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.index_dim = j.at("index_dim").get<std::size_t>();
  cfg.prior_scale = j.at("prior_scale").get<double>();
  cfg.epi_hidden = j.at("epi_hidden").get<std::vector<std::size_t>>();
  cfg.init = j.at("init").get<std::string>() == "uniform"
                 ? GlorotVariant::uniform
                 : GlorotVariant::normal;
  EnnModel m = make_enn(cfg, 0);
  m.prior_seed = j.at("prior_seed").get<std::uint64_t>();
  const auto& base = j.at("base");
  if (base.size() != m.base.size()) {
    throw std::runtime_error("checkpoint: member count mismatch");
  }
  for (std::size_t k = 0; k < m.base.size(); ++k) {
    detail::params_from_json(base[k], m.base[k]);
  }
  if (cfg.arch == Arch::epinet) {
    detail::params_from_json(j.at("epi_train"), m.epi_train);
    detail::params_from_json(j.at("epi_prior"), m.epi_prior);
  }
  return m;
}

}  // namespace ennal
