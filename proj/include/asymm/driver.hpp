#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "asymm/asymm.hpp"
#include "asymm/centralized.hpp"
#include "asymm/config.hpp"
#include "asymm/dataset.hpp"
#include "asymm/gradcheck.hpp"
#include "asymm/graph.hpp"
#include "asymm/metrics.hpp"
#include "asymm/scenarios.hpp"

namespace asymm {

inline bool log_enabled(const char* level) {
  const char* env = std::getenv("LOG_LEVEL");
  if (!env) return false;
  const std::string want(level), have(env);
  if (have == "debug") return true;
  if (have == "info") return want == "info" || want == "warn";
  if (have == "warn") return want == "warn";
  return false;
}

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

inline void write_trace_csv(const run_trace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw error("cannot write " + path);
  out << "event_index,node,grad_norm,avg_eq_violation,avg_ineq_violation,"
         "consensus_disagreement,lagrangian_value,phase_count\n";
  for (const auto& r : trace.rows) {
    out << r.event_index << "," << r.node << ",";
    if (!std::isnan(r.grad_norm)) out << fmt_g17(r.grad_norm);
    out << "," << fmt_g17(r.avg_eq_violation) << "," << fmt_g17(r.avg_ineq_violation) << ","
        << fmt_g17(r.consensus_disagreement) << "," << fmt_g17(r.lagrangian_value) << ","
        << r.phase_count << "\n";
  }
}

inline void write_violations_csv(const run_trace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw error("cannot write " + path);
  out << "event_index,avg_eq_violation,avg_ineq_violation,avg_violation\n";
  for (const auto& r : trace.rows)
    out << r.event_index << "," << fmt_g17(r.avg_eq_violation) << ","
        << fmt_g17(r.avg_ineq_violation) << "," << fmt_g17(r.avg_violation) << "\n";
}

// ---------------------------------------------------------------------------
// Scenario assembly from a run_config (synthetic, directory, or IDX data)
// ---------------------------------------------------------------------------

namespace detail {

inline digit_config digit_config_from(const run_config& cfg, std::uint64_t data_seed) {
  digit_config d;
  d.supervised_per_node = cfg.sup_per_node;
  d.unsupervised_per_node = cfg.unsup_per_node;
  d.feature_dim = cfg.feature_dim;
  d.private_hidden = cfg.hidden;
  d.shared_hidden = cfg.hidden;
  d.blob_sigma = cfg.blob_sigma;
  d.test_per_class = cfg.test_per_class;
  d.use_unsupervised = cfg.use_unsupervised;
  d.data_seed = data_seed;
  d.graph_kind = cfg.graph_spec;
  if (!std::isnan(cfg.weight_decay)) d.weight_decay = cfg.weight_decay;
  if (!std::isnan(cfg.output_bias)) d.output_bias_init = cfg.output_bias;
  return d;
}

inline document_config document_config_from(const run_config& cfg, std::uint64_t data_seed) {
  document_config d;
  d.supervised_per_node = cfg.doc_sup_per_node;
  d.unsupervised_total = cfg.doc_unsup_total;
  d.hidden_units = cfg.doc_hidden;
  d.words_per_class = cfg.words_per_class;
  d.data_seed = data_seed;
  d.graph_kind = cfg.graph_spec;
  if (!std::isnan(cfg.weight_decay)) d.weight_decay = cfg.weight_decay;
  if (!std::isnan(cfg.output_bias)) d.output_bias_init = cfg.output_bias;
  return d;
}

// Digit scenario backed by IDX image/label files ("data=idx:<img>:<lbl>").
inline built_scenario build_digit_from_idx(const digit_config& cfg, const std::string& images_path,
                                           const std::string& labels_path) {
  auto images = load_idx_images(images_path);
  auto labels = load_idx_labels(labels_path);
  if (images.size() != labels.size()) throw invalid_config("idx: image/label count mismatch");
  if (images.empty()) throw invalid_config("idx: empty dataset");
  const int dim = static_cast<int>(images[0].size());
  const int n = cfg.node_count;

  std::vector<std::vector<int>> by_class(n);
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k] >= 0 && labels[k] < n) by_class[labels[k]].push_back(static_cast<int>(k));
  for (int c = 0; c < n; ++c)
    if (by_class[c].empty()) throw invalid_config("idx: class " + std::to_string(c) + " missing");

  digit_config local = cfg;
  local.feature_dim = dim;
  built_scenario sc = build_digit_scenario(local);  // wiring + graph, data replaced below
  std::vector<std::size_t> cursor(n, 0);
  auto take = [&](int cls) -> const std::vector<double>& {
    const auto& pool = by_class[cls];
    const auto& img = images[pool[cursor[cls] % pool.size()]];
    ++cursor[cls];
    return img;
  };
  for (int i = 0; i < n; ++i) {
    auto& np = sc.problems[i];
    np.private_data.samples.clear();
    np.private_data.dim = dim;
    const std::string pname = "p" + std::to_string(i);
    const int positives = local.supervised_per_node / 2;
    for (int t = 0; t < positives; ++t) {
      data_sample s;
      s.x = take(i);
      s.labels[pname] = 1.0;
      np.private_data.samples.push_back(std::move(s));
    }
    int other = (i + 1) % n;
    for (int t = positives; t < local.supervised_per_node; ++t) {
      data_sample s;
      s.x = take(other);
      s.labels[pname] = 0.0;
      np.private_data.samples.push_back(std::move(s));
      other = (other + 1) % n;
      if (other == i) other = (other + 1) % n;
    }
    if (local.use_unsupervised)
      for (int t = 0; t < local.unsupervised_per_node; ++t) {
        data_sample s;
        s.x = take((i + t) % n);
        np.private_data.samples.push_back(std::move(s));
      }
  }
  sc.test_data = dataset{};
  sc.test_data.dim = dim;
  sc.test_labels.clear();
  for (int cls = 0; cls < n; ++cls)
    for (int t = 0; t < local.test_per_class; ++t) {
      data_sample s;
      s.x = take(cls);
      sc.test_data.samples.push_back(std::move(s));
      for (int i = 0; i < n; ++i)
        sc.test_labels["p" + std::to_string(i)].push_back(cls == i ? 1 : 0);
      sc.test_labels["even"].push_back(cls % 2 == 0 ? 1 : 0);
      sc.test_labels["odd"].push_back(cls % 2 == 1 ? 1 : 0);
    }
  return sc;
}

// Scenario data from a directory written by gen-data: graph.txt, kb.txt,
// node<i>.csv, and optionally test.csv + test_labels.csv.
inline built_scenario build_from_directory(const run_config& cfg, const std::string& dir) {
  namespace fs = std::filesystem;
  const bool digit = cfg.scenario == "digit_parity";
  built_scenario sc = digit ? build_digit_scenario(digit_config_from(cfg, cfg.seed))
                            : build_document_scenario(document_config_from(cfg, cfg.seed));
  sc.g = load_graph_file((fs::path(dir) / "graph.txt").string());
  if (sc.g.node_count != static_cast<int>(sc.problems.size()))
    throw invalid_config("data dir: graph size does not match the scenario node count");

  std::ifstream kb_in((fs::path(dir) / "kb.txt").string());
  if (!kb_in) throw invalid_config("data dir: missing kb.txt");
  auto kb = parse_knowledge_base(kb_in);

  for (std::size_t i = 0; i < sc.problems.size(); ++i) {
    auto& np = sc.problems[i];
    const std::string label = digit ? "p" + std::to_string(i) : document_class_names()[i];
    np.private_data =
        load_dataset_csv((fs::path(dir) / ("node" + std::to_string(i) + ".csv")).string(), label);
    np.private_eq = constraint_system{constraint_kind::equality};
    np.shared_eq = constraint_system{constraint_kind::equality};
    for (const auto& e : kb) {
      if (e.shared)
        add_formula_constraint(np, np.shared_eq, e.f);
      else if (e.node_id == static_cast<int>(i))
        add_formula_constraint(np, np.private_eq, e.f);
    }
  }

  sc.test_data = dataset{};
  sc.test_labels.clear();
  const auto test_path = fs::path(dir) / "test.csv";
  const auto truth_path = fs::path(dir) / "test_labels.csv";
  if (fs::exists(test_path)) {
    sc.test_data = load_dataset_csv(test_path.string(), "_unused");
    if (fs::exists(truth_path)) {
      std::ifstream in(truth_path.string());
      std::string line;
      if (!std::getline(in, line)) throw parse_error("test_labels.csv: missing header");
      std::vector<std::string> names;
      std::istringstream hs(line);
      std::string f;
      while (std::getline(hs, f, ',')) names.push_back(f);
      while (std::getline(in, line)) {
        std::istringstream ls(line);
        for (const auto& name : names) {
          if (!std::getline(ls, f, ',')) throw parse_error("test_labels.csv: short row");
          sc.test_labels[name].push_back(std::stoi(f));
        }
      }
    }
  }
  return sc;
}

}  // namespace detail

inline built_scenario build_scenario(const run_config& cfg, std::uint64_t data_seed) {
  if (cfg.scenario == "toy_consensus") {
    auto tc = make_toy_pair_quadratic();
    built_scenario sc;
    sc.g = tc.g;
    sc.problems = std::move(tc.problems);
    return sc;
  }
  if (cfg.data == "synthetic") {
    return cfg.scenario == "digit_parity"
               ? build_digit_scenario(detail::digit_config_from(cfg, data_seed))
               : build_document_scenario(detail::document_config_from(cfg, data_seed));
  }
  if (cfg.data.rfind("idx:", 0) == 0) {
    if (cfg.scenario != "digit_parity") throw invalid_config("idx data is digit-only");
    const auto rest = cfg.data.substr(4);
    const auto sep = rest.find(':');
    if (sep == std::string::npos) throw invalid_config("data=idx:<images>:<labels>");
    return detail::build_digit_from_idx(detail::digit_config_from(cfg, data_seed),
                                        rest.substr(0, sep), rest.substr(sep + 1));
  }
  return detail::build_from_directory(cfg, cfg.data);
}

inline hyperparams hyper_from_config(const run_config& cfg) {
  hyperparams h;
  h.eps0 = cfg.eps0;
  h.eps_min = cfg.eps_min;
  h.eps_shrink = cfg.beta;
  h.penalty_growth = cfg.gamma;
  h.penalty_cap = cfg.penalty_cap;
  if (!std::isnan(cfg.alpha)) {
    h.alpha = cfg.alpha;
  } else if (cfg.scenario == "digit_parity") {
    h.alpha = 2e-3;
  } else if (cfg.scenario == "document") {
    h.alpha = 5e-3;
  } else {
    h.alpha = 5e-2;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Predictor evaluation and metrics
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> average_shared_weights(const run_trace& trace) {
  std::vector<double> avg(trace.final_states[0].pd.w_shared.size(), 0.0);
  for (const auto& st : trace.final_states)
    for (std::size_t k = 0; k < avg.size(); ++k) avg[k] += st.pd.w_shared[k];
  for (auto& v : avg) v /= trace.final_states.size();
  return avg;
}

}  // namespace detail

// Predictions for one report predictor on the scenario test set. Private
// predictors evaluate at their own node's weights; shared outputs at the
// network average of the local copies.
inline std::vector<double> predict_on_test(const built_scenario& sc, const run_trace& trace,
                                           const std::string& name) {
  std::vector<double> preds;
  preds.reserve(sc.test_data.samples.size());
  for (std::size_t i = 0; i < sc.problems.size(); ++i) {
    const auto& np = sc.problems[i];
    for (std::size_t k = 0; k < np.private_output_names.size(); ++k) {
      if (np.private_output_names[k] != name) continue;
      const auto& w = trace.final_states[i].pd.w_priv;
      for (const auto& s : sc.test_data.samples)
        preds.push_back(mlp_forward(*np.private_spec, w, s.x)[k]);
      return preds;
    }
  }
  const auto& np = sc.problems[0];
  for (std::size_t k = 0; k < np.shared_output_names.size(); ++k) {
    if (np.shared_output_names[k] != name) continue;
    const auto avg = detail::average_shared_weights(trace);
    for (const auto& s : sc.test_data.samples)
      preds.push_back(mlp_forward(*np.shared_spec, avg, s.x)[k]);
    return preds;
  }
  throw missing_activation("predictor '" + name + "' not found in scenario");
}

inline metrics_report evaluate_run(const built_scenario& sc, const run_trace& trace) {
  metrics_report rep;
  if (!trace.rows.empty()) {
    rep.final_avg_violation = trace.rows.back().avg_violation;
    rep.consensus_disagreement = trace.rows.back().consensus_disagreement;
    rep.completed_phases = trace.rows.back().phase_count;
  } else {
    rep.final_avg_violation = trace.initial_violation;
  }
  if (sc.test_data.samples.empty()) return rep;
  for (const auto& name : sc.report_predictors) {
    auto it = sc.test_labels.find(name);
    if (it == sc.test_labels.end()) continue;
    rep.per_predictor[name] = compute_metrics(predict_on_test(sc, trace, name), it->second);
  }
  return rep;
}

inline void write_metrics_json(const metrics_report& rep, const run_config& cfg,
                               double initial_violation, const std::string& path) {
  nlohmann::json j;
  for (const auto& [name, m] : rep.per_predictor) {
    j[name] = {{"precision", m.precision},
               {"recall", m.recall},
               {"f1", m.f1},
               {"mean", m.mean},
               {"std", m.stddev}};
  }
  j["_summary"] = {{"scenario", cfg.scenario},
                   {"seed", cfg.seed},
                   {"iterations", cfg.iterations},
                   {"repeats", cfg.repeats},
                   {"initial_avg_violation", initial_violation},
                   {"final_avg_violation", rep.final_avg_violation},
                   {"consensus_disagreement", rep.consensus_disagreement},
                   {"completed_phases", rep.completed_phases}};
  std::ofstream out(path);
  if (!out) throw error("cannot write " + path);
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Subcommands. Exit codes: 0 ok, 1 run error, 2 config error.
// ---------------------------------------------------------------------------

inline int cmd_run(const run_config& cfg) {
  try {
    cfg.validate();
  } catch (const invalid_config& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  try {
    std::filesystem::create_directories(cfg.out_dir);
    const hyperparams hyper = hyper_from_config(cfg);

    metrics_report first_rep;
    double initial_violation = 0.0;
    std::map<std::string, std::vector<double>> f1_by_predictor;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      auto sc = build_scenario(cfg, cfg.seed + rep);
      run_options opts;
      opts.iterations = cfg.iterations;
      opts.hyper = hyper;
      opts.schedule_seed = cfg.seed;
      opts.param_seed = cfg.seed;
      opts.diagnostics = cfg.diagnostics;
      if (log_enabled("info"))
        opts.on_phase = [rep](int phase, double v) {
          std::cerr << "[repeat " << rep << "] phase " << phase << " avg violation " << v << "\n";
        };
      auto trace = run(sc.g, sc.problems, opts);
      auto rep_metrics = evaluate_run(sc, trace);
      for (const auto& [name, m] : rep_metrics.per_predictor)
        f1_by_predictor[name].push_back(m.f1);
      if (rep == 0) {
        first_rep = rep_metrics;
        initial_violation = trace.initial_violation;
        write_trace_csv(trace, (std::filesystem::path(cfg.out_dir) / "trace.csv").string());
        write_violations_csv(trace,
                             (std::filesystem::path(cfg.out_dir) / "violations.csv").string());
      }
    }
    for (auto& [name, m] : first_rep.per_predictor) fold_repeat_f1(m, f1_by_predictor[name]);
    write_metrics_json(first_rep, cfg, initial_violation,
                       (std::filesystem::path(cfg.out_dir) / "metrics.json").string());
    std::cout << "run complete: final avg violation " << fmt_g17(first_rep.final_avg_violation)
              << ", consensus disagreement " << fmt_g17(first_rep.consensus_disagreement)
              << ", completed phases " << first_rep.completed_phases << "\n";
    return 0;
  } catch (const invalid_config& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "run error: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_compare(const run_config& cfg) {
  try {
    cfg.validate();
  } catch (const invalid_config& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  try {
    std::filesystem::create_directories(cfg.out_dir);
    auto sc = build_scenario(cfg, cfg.seed);
    run_options opts;
    opts.iterations = cfg.iterations;
    opts.hyper = hyper_from_config(cfg);
    opts.schedule_seed = cfg.seed;
    opts.param_seed = cfg.seed;
    opts.diagnostics = cfg.diagnostics;
    opts.record_iterates = true;
    auto dist = run(sc.g, sc.problems, opts);

    std::vector<int> block_schedule = dist.awake_sequence;
    const auto verdict_path = (std::filesystem::path(cfg.out_dir) / "verdict.txt").string();
    if (!cfg.mm_schedule_file.empty()) {
      std::ifstream in(cfg.mm_schedule_file);
      if (!in) throw invalid_config("cannot open schedule file: " + cfg.mm_schedule_file);
      std::vector<int> given;
      int v;
      while (in >> v) given.push_back(v);
      if (given != block_schedule) {
        std::ofstream out(verdict_path);
        out << "not comparable: supplied block schedule differs from the awakening trace ("
            << given.size() << " vs " << block_schedule.size() << " entries)\n";
        std::cout << "not comparable\n";
        return 0;
      }
    }

    run_options mm_opts = opts;
    mm_opts.diagnostics = false;
    auto cent = centralized_mm(sc.g, sc.problems, block_schedule, mm_opts);

    double max_diff = 0.0;
    {
      std::ofstream out((std::filesystem::path(cfg.out_dir) / "compare.csv").string());
      out << "event_index,node,max_abs_diff\n";
      for (std::size_t e = 0; e < dist.iterates.size(); ++e) {
        const auto& [na, wa] = dist.iterates[e];
        const auto& [nb, wb] = cent.iterates[e];
        double d = na == nb ? 0.0 : std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < wa.size() && na == nb; ++k)
          d = std::max(d, std::fabs(wa[k] - wb[k]));
        max_diff = std::max(max_diff, d);
        out << e << "," << na << "," << fmt_g17(d) << "\n";
      }
    }

    const bool equivalent = max_diff <= 1e-12;
    std::ofstream out(verdict_path);
    out << (equivalent ? "equivalent" : "not equivalent") << " max_abs_diff=" << fmt_g17(max_diff)
        << "\n";
    if (!sc.test_data.samples.empty()) {
      auto m_dist = evaluate_run(sc, dist);
      auto m_cent = evaluate_run(sc, cent);
      double max_f1_diff = 0.0;
      for (const auto& [name, m] : m_dist.per_predictor)
        max_f1_diff = std::max(max_f1_diff, std::fabs(m.f1 - m_cent.per_predictor.at(name).f1));
      out << "max_f1_diff=" << fmt_g17(max_f1_diff) << "\n";
    }
    std::cout << (equivalent ? "equivalent" : "not equivalent")
              << " max_abs_diff=" << fmt_g17(max_diff) << "\n";
    return equivalent ? 0 : 1;
  } catch (const invalid_config& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "run error: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_gen_data(const run_config& cfg) {
  try {
    cfg.validate();
    if (cfg.scenario == "toy_consensus")
      throw invalid_config("gen-data applies to the digit_parity and document scenarios");
    std::filesystem::create_directories(cfg.out_dir);
    auto sc = build_scenario(cfg, cfg.seed);
    namespace fs = std::filesystem;
    save_graph_file(sc.g, (fs::path(cfg.out_dir) / "graph.txt").string());
    {
      std::ofstream kb((fs::path(cfg.out_dir) / "kb.txt").string());
      kb << (cfg.scenario == "digit_parity" ? digit_kb_text(sc.g.node_count)
                                            : document_kb_text());
    }
    for (std::size_t i = 0; i < sc.problems.size(); ++i) {
      const std::string label = cfg.scenario == "digit_parity"
                                    ? "p" + std::to_string(i)
                                    : std::string(document_class_names()[i]);
      save_dataset_csv(sc.problems[i].private_data,
                       (fs::path(cfg.out_dir) / ("node" + std::to_string(i) + ".csv")).string(),
                       label);
    }
    if (!sc.test_data.samples.empty()) {
      save_dataset_csv(sc.test_data, (fs::path(cfg.out_dir) / "test.csv").string(), "_none");
      std::ofstream out((fs::path(cfg.out_dir) / "test_labels.csv").string());
      bool first = true;
      for (const auto& name : sc.report_predictors) {
        out << (first ? "" : ",") << name;
        first = false;
      }
      out << "\n";
      for (std::size_t t = 0; t < sc.test_data.samples.size(); ++t) {
        first = true;
        for (const auto& name : sc.report_predictors) {
          out << (first ? "" : ",") << sc.test_labels.at(name)[t];
          first = false;
        }
        out << "\n";
      }
    }
    std::cout << "wrote scenario data to " << cfg.out_dir << "\n";
    return 0;
  } catch (const invalid_config& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "run error: " << e.what() << "\n";
    return 1;
  }
}

inline int cmd_check_grad(const run_config& cfg) {
  try {
    const auto digit = check_gradients_digit(100, cfg.seed);
    const auto doc = check_gradients_document(60, cfg.seed);
    const auto toys = check_gradients_toys(100, cfg.seed);
    auto report = [](const char* name, const gradcheck_result& r) {
      std::cout << name << ": states " << r.states << " max_rel_err " << fmt_g17(r.max_rel_err)
                << " kink_states " << r.kink_states << " max_rel_err_kink "
                << fmt_g17(r.max_rel_err_kink) << "\n";
    };
    report("digit", digit);
    report("document", doc);
    report("toys", toys);
    const bool ok = digit.pass(1e-5, 1e-3) && doc.pass(1e-5, 1e-3) && toys.pass(1e-5, 1e-3);
    std::cout << (ok ? "gradients OK" : "gradient check FAILED") << "\n";
    return ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "run error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace asymm
