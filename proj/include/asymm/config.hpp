#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "asymm/errors.hpp"

namespace asymm {

// Flat run configuration: one key=value file plus flag overrides. NaN
// means "use the scenario default".
struct run_config {
  std::string scenario = "digit_parity";  // digit_parity | document | toy_consensus
  std::uint64_t seed = 0;
  long iterations = 20000;

  double alpha = std::numeric_limits<double>::quiet_NaN();
  double gamma = 2.0;   // penalty growth factor
  double beta = 0.5;    // tolerance shrink factor
  double eps0 = 0.1;
  double eps_min = 1e-6;
  double penalty_cap = 1e6;
  double weight_decay = std::numeric_limits<double>::quiet_NaN();
  double output_bias = std::numeric_limits<double>::quiet_NaN();

  int repeats = 1;
  std::string out_dir = "out";
  std::string graph_spec = "ring";   // ring | path | complete | random | file:<path>
  std::string data = "synthetic";    // synthetic | <dir> | idx:<images>:<labels>

  // digit scenario knobs
  int sup_per_node = 60;
  int unsup_per_node = 200;
  int feature_dim = 16;
  int hidden = 8;
  int test_per_class = 50;
  double blob_sigma = 0.05;
  bool use_unsupervised = true;

  // document scenario knobs
  int doc_sup_per_node = 40;
  int doc_unsup_total = 120;
  int doc_hidden = 0;
  int words_per_class = 5;

  bool diagnostics = true;
  std::string mm_schedule_file;  // cmd_compare: optional explicit block schedule

  void validate() const {
    if (scenario != "digit_parity" && scenario != "document" && scenario != "toy_consensus")
      throw invalid_config("unknown scenario: " + scenario);
    if (iterations < 0) throw invalid_config("iterations must be >= 0");
    if (repeats < 1) throw invalid_config("repeats must be >= 1");
    if (gamma < 1.0) throw invalid_config("gamma must be >= 1");
    if (beta <= 0.0 || beta > 1.0) throw invalid_config("beta must be in (0, 1]");
    if (eps0 <= 0.0 || eps_min <= 0.0 || penalty_cap <= 0.0)
      throw invalid_config("tolerances and penalty cap must be positive");
    if (!std::isnan(alpha) && alpha <= 0.0) throw invalid_config("alpha must be positive");
    if (!std::isnan(weight_decay) && weight_decay < 0.0)
      throw invalid_config("weight_decay must be >= 0");
  }
};

namespace detail {

inline void apply_config_kv(run_config& cfg, const std::string& key, const std::string& value) {
  auto as_d = [&value, &key]() {
    try {
      return std::stod(value);
    } catch (const std::exception&) {
      throw invalid_config("bad numeric value for " + key + ": " + value);
    }
  };
  auto as_l = [&value, &key]() {
    try {
      return std::stol(value);
    } catch (const std::exception&) {
      throw invalid_config("bad integer value for " + key + ": " + value);
    }
  };
  auto as_b = [&value, &key]() {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw invalid_config("bad boolean value for " + key + ": " + value);
  };
  if (key == "scenario") cfg.scenario = value;
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(as_l());
  else if (key == "iters" || key == "iterations") cfg.iterations = as_l();
  else if (key == "alpha") cfg.alpha = as_d();
  else if (key == "gamma") cfg.gamma = as_d();
  else if (key == "beta") cfg.beta = as_d();
  else if (key == "eps0") cfg.eps0 = as_d();
  else if (key == "eps_min") cfg.eps_min = as_d();
  else if (key == "penalty_cap") cfg.penalty_cap = as_d();
  else if (key == "weight_decay") cfg.weight_decay = as_d();
  else if (key == "output_bias") cfg.output_bias = as_d();
  else if (key == "repeats") cfg.repeats = static_cast<int>(as_l());
  else if (key == "out") cfg.out_dir = value;
  else if (key == "graph") cfg.graph_spec = value;
  else if (key == "data") cfg.data = value;
  else if (key == "sup_per_node") cfg.sup_per_node = static_cast<int>(as_l());
  else if (key == "unsup_per_node") cfg.unsup_per_node = static_cast<int>(as_l());
  else if (key == "feature_dim") cfg.feature_dim = static_cast<int>(as_l());
  else if (key == "hidden") cfg.hidden = static_cast<int>(as_l());
  else if (key == "test_per_class") cfg.test_per_class = static_cast<int>(as_l());
  else if (key == "blob_sigma") cfg.blob_sigma = as_d();
  else if (key == "use_unsupervised") cfg.use_unsupervised = as_b();
  else if (key == "doc_sup_per_node") cfg.doc_sup_per_node = static_cast<int>(as_l());
  else if (key == "doc_unsup_total") cfg.doc_unsup_total = static_cast<int>(as_l());
  else if (key == "doc_hidden") cfg.doc_hidden = static_cast<int>(as_l());
  else if (key == "words_per_class") cfg.words_per_class = static_cast<int>(as_l());
  else if (key == "diagnostics") cfg.diagnostics = as_b();
  else if (key == "mm_schedule") cfg.mm_schedule_file = value;
  else throw invalid_config("unknown config key: " + key);
}

}  // namespace detail

inline run_config parse_config_stream(std::istream& in, run_config base = {}) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::string trimmed;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c)) || !trimmed.empty()) trimmed.push_back(c);
    while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back())))
      trimmed.pop_back();
    if (trimmed.empty()) continue;
    auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw invalid_config("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trimmed.substr(0, eq);
    std::string value = trimmed.substr(eq + 1);
    while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back()))) key.pop_back();
    std::size_t start = 0;
    while (start < value.size() && std::isspace(static_cast<unsigned char>(value[start]))) ++start;
    value.erase(0, start);
    detail::apply_config_kv(base, key, value);
  }
  return base;
}

inline run_config load_config_file(const std::string& path, run_config base = {}) {
  std::ifstream in(path);
  if (!in) throw invalid_config("cannot open config file: " + path);
  return parse_config_stream(in, std::move(base));
}

}  // namespace asymm
