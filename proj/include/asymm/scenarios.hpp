#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "asymm/dataset.hpp"
#include "asymm/graph.hpp"
#include "asymm/logic.hpp"
#include "asymm/problem.hpp"
#include "asymm/rng.hpp"

namespace asymm {

struct built_scenario {
  graph g;
  std::vector<node_problem> problems;
  dataset test_data;                                 // held-out / transductive samples
  std::map<std::string, std::vector<int>> test_labels;  // predicate -> 0/1 truth
  std::vector<std::string> report_predictors;
};

namespace detail {

inline graph scenario_graph(const std::string& kind, int n, std::uint64_t seed) {
  if (kind == "ring") return make_ring(n);
  if (kind == "path") return make_path(n);
  if (kind == "complete") return make_complete(n);
  if (kind == "random") return make_random_connected(n, 0.4, seed);
  if (kind.rfind("file:", 0) == 0) return load_graph_file(kind.substr(5));
  throw invalid_config("unknown graph kind: " + kind);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Digit parity scenario: node i learns a private recognizer p_i for digit
// class i; all nodes share a two-output parity predictor (even, odd).
// Private knowledge: p_i => even (i even) or p_i => odd (i odd), enforced
// on D_i. Shared knowledge: even xor odd, replicated on every node's
// data. No shared data.
// ---------------------------------------------------------------------------

struct digit_config {
  int node_count = 10;
  int supervised_per_node = 60;    // half positive, half negative examples
  int unsupervised_per_node = 200;
  int feature_dim = 16;
  int private_hidden = 8;
  int shared_hidden = 8;
  double blob_sigma = 0.05;
  double weight_decay = 1e-4;
  double output_bias_init = 0.0;
  int test_per_class = 50;
  bool use_unsupervised = true;
  // Separation of even-class from odd-class centers along a random
  // direction; at desk scale the parity concept must be representable by
  // the small shared net for the constraint transfer to be measurable.
  double parity_margin = 0.18;
  std::uint64_t data_seed = 1;
  std::string graph_kind = "ring";
  std::optional<graph> topology;

  void validate() const {
    if (node_count < 2) throw invalid_config("digit scenario needs at least 2 nodes");
    if (supervised_per_node < 2 || feature_dim < 1 || test_per_class < 1)
      throw invalid_config("digit scenario: bad sample counts");
    if (unsupervised_per_node < 0 || blob_sigma <= 0.0)
      throw invalid_config("digit scenario: bad generator parameters");
  }
};

inline std::string digit_kb_text(int node_count) {
  std::ostringstream out;
  for (int i = 0; i < node_count; ++i)
    out << "private:" << i << " implies p" << i << " " << (i % 2 == 0 ? "even" : "odd") << "\n";
  out << "shared xor even odd\n";
  return out.str();
}

// Gaussian blobs in [0,1]^d, one class per node. Even and odd class
// centers are shifted apart along one random direction by parity_margin.
struct digit_generator {
  std::vector<std::vector<double>> centers;
  double sigma;
  rng r;

  digit_generator(int classes, int dim, double sigma_, double parity_margin, std::uint64_t seed)
      : sigma(sigma_), r(rng::sub_seed(seed, 0xD161)) {
    centers.assign(classes, std::vector<double>(dim));
    for (auto& c : centers)
      for (auto& v : c) v = r.next_uniform(0.2, 0.8);
    std::vector<double> dir(dim);
    double norm = 0.0;
    for (auto& v : dir) {
      v = r.next_normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (int cls = 0; cls < classes; ++cls) {
      const double shift = (cls % 2 == 0 ? parity_margin : -parity_margin) / norm;
      for (int k = 0; k < dim; ++k)
        centers[cls][k] = std::min(0.95, std::max(0.05, centers[cls][k] + shift * dir[k]));
    }
  }

  std::vector<double> sample(int cls) {
    std::vector<double> x(centers[cls].size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      double v = centers[cls][k] + sigma * r.next_normal();
      x[k] = std::min(1.0, std::max(0.0, v));
    }
    return x;
  }
};

inline built_scenario build_digit_scenario(const digit_config& cfg) {
  cfg.validate();
  const int n = cfg.node_count;
  built_scenario sc;
  sc.g = cfg.topology ? *cfg.topology : detail::scenario_graph(cfg.graph_kind, n, cfg.data_seed);
  if (sc.g.node_count != n) throw invalid_config("digit scenario: graph size != node count");

  digit_generator gen(n, cfg.feature_dim, cfg.blob_sigma, cfg.parity_margin, cfg.data_seed);

  mlp_spec shared_spec;
  shared_spec.layer_sizes = cfg.shared_hidden > 0
                                ? std::vector<int>{cfg.feature_dim, cfg.shared_hidden, 2}
                                : std::vector<int>{cfg.feature_dim, 2};
  shared_spec.output_bias_init = cfg.output_bias_init;
  shared_spec.validate();

  auto kb = parse_knowledge_base(digit_kb_text(n));

  for (int i = 0; i < n; ++i) {
    node_problem np;
    np.node_id = i;
    np.node_count = n;
    mlp_spec priv;
    priv.layer_sizes = cfg.private_hidden > 0
                           ? std::vector<int>{cfg.feature_dim, cfg.private_hidden, 1}
                           : std::vector<int>{cfg.feature_dim, 1};
    priv.output_bias_init = cfg.output_bias_init;
    priv.validate();
    np.private_spec = priv;
    np.shared_spec = shared_spec;
    np.private_output_names = {"p" + std::to_string(i)};
    np.shared_output_names = {"even", "odd"};
    np.weight_decay = cfg.weight_decay;

    np.private_data.dim = cfg.feature_dim;
    const std::string pname = "p" + std::to_string(i);
    const int positives = cfg.supervised_per_node / 2;
    for (int t = 0; t < positives; ++t) {
      data_sample s;
      s.x = gen.sample(i);
      s.labels[pname] = 1.0;
      np.private_data.samples.push_back(std::move(s));
    }
    int other = (i + 1) % n;
    for (int t = positives; t < cfg.supervised_per_node; ++t) {
      data_sample s;
      s.x = gen.sample(other);
      s.labels[pname] = 0.0;
      np.private_data.samples.push_back(std::move(s));
      other = (other + 1) % n;
      if (other == i) other = (other + 1) % n;
    }
    if (cfg.use_unsupervised) {
      for (int t = 0; t < cfg.unsupervised_per_node; ++t) {
        data_sample s;
        s.x = gen.sample((i + t) % n);
        np.private_data.samples.push_back(std::move(s));
      }
    }

    for (const auto& e : kb) {
      if (e.shared || e.node_id == i) {
        constraint_system& sys = e.shared ? np.shared_eq : np.private_eq;
        add_formula_constraint(np, sys, e.f);
      }
    }
    sc.problems.push_back(std::move(np));
  }

  sc.test_data.dim = cfg.feature_dim;
  for (int cls = 0; cls < n; ++cls)
    for (int t = 0; t < cfg.test_per_class; ++t) {
      data_sample s;
      s.x = gen.sample(cls);
      sc.test_data.samples.push_back(std::move(s));
      for (int i = 0; i < n; ++i)
        sc.test_labels["p" + std::to_string(i)].push_back(cls == i ? 1 : 0);
      sc.test_labels["even"].push_back(cls % 2 == 0 ? 1 : 0);
      sc.test_labels["odd"].push_back(cls % 2 == 1 ? 1 : 0);
    }
  for (int i = 0; i < n; ++i) sc.report_predictors.push_back("p" + std::to_string(i));
  sc.report_predictors.push_back("even");
  sc.report_predictors.push_back("odd");
  return sc;
}

// ---------------------------------------------------------------------------
// Document classification scenario: six classes, one node per class, one
// shared six-output classifier, positive-only supervision per node, and
// the knowledge-base awareness pattern below. No private predictors.
// ---------------------------------------------------------------------------

inline const std::array<std::string, 6>& document_class_names() {
  static const std::array<std::string, 6> names = {"clothing", "politics", "running",
                                                   "shoes",    "sport",    "wrestling"};
  return names;
}

// One line per (formula, aware node); node ids follow the class order
// above (clothing=0 ... wrestling=5).
inline const char* document_kb_text() {
  return
      "private:1 not (and politics wrestling)\n"
      "private:5 not (and politics wrestling)\n"
      "private:1 not (and politics clothing)\n"
      "private:0 not (and politics clothing)\n"
      "private:1 not (and politics sport)\n"
      "private:4 not (and politics sport)\n"
      "private:1 not (and politics running)\n"
      "private:2 not (and politics running)\n"
      "private:1 not (and politics shoes)\n"
      "private:3 not (and politics shoes)\n"
      "private:5 implies wrestling sport\n"
      "private:4 implies wrestling sport\n"
      "private:2 implies (and running shoes) clothing\n"
      "private:3 implies (and running shoes) clothing\n"
      "private:1 implies (and running shoes) clothing\n"
      "private:2 implies running sport\n"
      "private:4 implies running sport\n";
}

struct document_config {
  int supervised_per_node = 40;
  int unsupervised_total = 120;
  int words_per_class = 5;
  int hidden_units = 0;            // 0 = single-layer classifier
  double weight_decay = 1e-3;
  double output_bias_init = -1.0;
  std::uint64_t data_seed = 1;
  std::string graph_kind = "ring";
  std::optional<graph> topology;

  int feature_dim() const { return 6 * words_per_class; }

  void validate() const {
    if (supervised_per_node < 1 || unsupervised_total < 0 || words_per_class < 1)
      throw invalid_config("document scenario: bad sample counts");
  }
};

namespace detail {

// Document archetypes: label sets consistent with the knowledge base
// (running and wrestling are sport; running+shoes documents are also
// clothing; politics is disjoint from everything).
inline const std::vector<std::vector<int>>& document_archetypes() {
  static const std::vector<std::vector<int>> types = {
      {0},            // clothing
      {1},            // politics
      {2, 4},         // running -> sport
      {3},            // shoes
      {4},            // sport
      {5, 4},         // wrestling -> sport
      {2, 3, 0, 4},   // running + shoes -> clothing (and sport)
  };
  return types;
}

inline std::vector<double> document_sample(const std::vector<int>& classes, int words_per_class,
                                           rng& r) {
  std::vector<double> x(6 * words_per_class);
  for (auto& v : x) v = r.next_uniform(0.0, 0.08);
  for (int c : classes)
    for (int k = 0; k < words_per_class; ++k)
      x[c * words_per_class + k] = r.next_uniform(0.55, 0.95);
  return x;
}

}  // namespace detail

inline built_scenario build_document_scenario(const document_config& cfg) {
  cfg.validate();
  const int n = 6;
  built_scenario sc;
  sc.g = cfg.topology ? *cfg.topology : detail::scenario_graph(cfg.graph_kind, n, cfg.data_seed);
  if (sc.g.node_count != n) throw invalid_config("document scenario: graph must have 6 nodes");

  const auto& names = document_class_names();
  const int dim = cfg.feature_dim();
  rng r(rng::sub_seed(cfg.data_seed, 0xD0C5));

  mlp_spec shared_spec;
  shared_spec.layer_sizes = cfg.hidden_units > 0 ? std::vector<int>{dim, cfg.hidden_units, 6}
                                                 : std::vector<int>{dim, 6};
  shared_spec.output_bias_init = cfg.output_bias_init;
  shared_spec.validate();

  auto kb = parse_knowledge_base(document_kb_text());
  const auto& types = detail::document_archetypes();

  for (int i = 0; i < n; ++i) {
    node_problem np;
    np.node_id = i;
    np.node_count = n;
    np.shared_spec = shared_spec;
    np.shared_output_names.assign(names.begin(), names.end());
    np.weight_decay = cfg.weight_decay;
    np.private_data.dim = dim;

    // positive-only supervision: documents whose label set contains class i
    std::vector<int> matching;
    for (std::size_t t = 0; t < types.size(); ++t)
      for (int c : types[t])
        if (c == i) matching.push_back(static_cast<int>(t));
    for (int t = 0; t < cfg.supervised_per_node; ++t) {
      const auto& type = types[matching[t % matching.size()]];
      data_sample s;
      s.x = detail::document_sample(type, cfg.words_per_class, r);
      s.labels[names[i]] = 1.0;
      np.private_data.samples.push_back(std::move(s));
    }

    for (const auto& e : kb)
      if (!e.shared && e.node_id == i) add_formula_constraint(np, np.private_eq, e.f);
    sc.problems.push_back(std::move(np));
  }

  // unsupervised pool, split evenly; also the transductive evaluation set
  sc.test_data.dim = dim;
  for (int t = 0; t < cfg.unsupervised_total; ++t) {
    const auto& type = types[t % types.size()];
    data_sample s;
    s.x = detail::document_sample(type, cfg.words_per_class, r);
    sc.test_data.samples.push_back(s);
    for (int c = 0; c < n; ++c) {
      bool has = false;
      for (int tc : type) has = has || (tc == c);
      sc.test_labels[names[c]].push_back(has ? 1 : 0);
    }
    sc.problems[t % n].private_data.samples.push_back(std::move(s));
  }
  sc.report_predictors.assign(names.begin(), names.end());
  return sc;
}

// ---------------------------------------------------------------------------
// Toy problems: tiny consensus/constrained instances with raw parameter
// blocks and closed-form optima; the distributed-vs-centralized
// equivalence suite runs on these.
// ---------------------------------------------------------------------------

struct toy_case {
  std::string name;
  graph g;
  std::vector<node_problem> problems;
  double expected_shared_value = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline custom_objective_term shared_quadratic(double target) {
  custom_objective_term t;
  t.eval_grad = [target](std::span<const double>, std::span<const double> ws,
                         std::span<double>, std::span<double> gs) {
    const double d = ws[0] - target;
    gs[0] += 2.0 * d;
    return d * d;
  };
  return t;
}

}  // namespace detail

// minimize (u-1)^2 + (u+1)^2 over a shared scalar u; optimum u* = 0.
inline toy_case make_toy_pair_quadratic() {
  toy_case tc;
  tc.name = "pair_quadratic";
  tc.g = build_graph(2, {{0, 1}});
  tc.expected_shared_value = 0.0;
  for (int i = 0; i < 2; ++i) {
    node_problem np;
    np.node_id = i;
    np.node_count = 2;
    np.raw_shared_dim = 1;
    np.init_shared = {0.5};
    np.custom_objective.push_back(detail::shared_quadratic(i == 0 ? 1.0 : -1.0));
    tc.problems.push_back(std::move(np));
  }
  return tc;
}

// Private blocks too: node i minimizes (w_i - c_i)^2 + (u - w_i)^2.
inline toy_case make_toy_pair_private() {
  toy_case tc;
  tc.name = "pair_private";
  tc.g = build_graph(2, {{0, 1}});
  tc.expected_shared_value = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double c = i == 0 ? 1.0 : -1.0;
    node_problem np;
    np.node_id = i;
    np.node_count = 2;
    np.raw_private_dim = 1;
    np.raw_shared_dim = 1;
    np.init_private = {0.0};
    np.init_shared = {0.25};
    custom_objective_term t;
    t.eval_grad = [c](std::span<const double> wp, std::span<const double> ws,
                      std::span<double> gp, std::span<double> gs) {
      const double a = wp[0] - c;
      const double b = ws[0] - wp[0];
      gp[0] += 2.0 * a - 2.0 * b;
      gs[0] += 2.0 * b;
      return a * a + b * b;
    };
    np.custom_objective.push_back(std::move(t));
    tc.problems.push_back(std::move(np));
  }
  return tc;
}

// Single node, nonconvex equality u^2 = 1 plus the inequality u >= 0;
// reduces to the plain centralized Method of Multipliers, u* = 1.
inline toy_case make_toy_single_constrained() {
  toy_case tc;
  tc.name = "single_constrained";
  tc.g = build_graph(1, {});
  tc.expected_shared_value = 1.0;
  node_problem np;
  np.node_id = 0;
  np.node_count = 1;
  np.raw_shared_dim = 1;
  np.init_shared = {2.0};
  custom_objective_term t;
  t.eval_grad = [](std::span<const double>, std::span<const double> ws, std::span<double>,
                   std::span<double> gs) {
    gs[0] += 0.2 * ws[0];
    return 0.1 * ws[0] * ws[0];
  };
  np.custom_objective.push_back(std::move(t));
  custom_constraint_block eq;
  eq.rows = 1;
  eq.eval = [](std::span<const double>, std::span<const double> ws, std::span<double> out) {
    out[0] = ws[0] * ws[0] - 1.0;
  };
  eq.jtvp = [](std::span<const double>, std::span<const double> ws, std::span<const double> cot,
               std::span<double>, std::span<double> gs) { gs[0] += cot[0] * 2.0 * ws[0]; };
  np.private_eq.custom_blocks.push_back(std::move(eq));
  custom_constraint_block ineq;
  ineq.rows = 1;
  ineq.eval = [](std::span<const double>, std::span<const double> ws, std::span<double> out) {
    out[0] = -ws[0];
  };
  ineq.jtvp = [](std::span<const double>, std::span<const double>, std::span<const double> cot,
                 std::span<double>, std::span<double> gs) { gs[0] -= cot[0]; };
  np.private_ineq.custom_blocks.push_back(std::move(ineq));
  tc.problems.push_back(std::move(np));
  return tc;
}

// 3-node ring, targets (-1, 0, 1); optimum u* = 0.
inline toy_case make_toy_ring_consensus() {
  toy_case tc;
  tc.name = "ring_consensus";
  tc.g = make_ring(3);
  tc.expected_shared_value = 0.0;
  const double targets[3] = {-1.0, 0.0, 1.0};
  for (int i = 0; i < 3; ++i) {
    node_problem np;
    np.node_id = i;
    np.node_count = 3;
    np.raw_shared_dim = 1;
    np.init_shared = {0.3};
    np.custom_objective.push_back(detail::shared_quadratic(targets[i]));
    tc.problems.push_back(std::move(np));
  }
  return tc;
}

// 3-node ring with node 0 holding the private equality u = 1.5.
inline toy_case make_toy_ring_constrained() {
  toy_case tc;
  tc.name = "ring_constrained";
  tc.g = make_ring(3);
  tc.expected_shared_value = 1.5;
  const double targets[3] = {1.0, 2.0, 3.0};
  for (int i = 0; i < 3; ++i) {
    node_problem np;
    np.node_id = i;
    np.node_count = 3;
    np.raw_shared_dim = 1;
    np.init_shared = {0.0};
    np.custom_objective.push_back(detail::shared_quadratic(targets[i]));
    if (i == 0) {
      custom_constraint_block eq;
      eq.rows = 1;
      eq.eval = [](std::span<const double>, std::span<const double> ws, std::span<double> out) {
        out[0] = ws[0] - 1.5;
      };
      eq.jtvp = [](std::span<const double>, std::span<const double>, std::span<const double> cot,
                   std::span<double>, std::span<double> gs) { gs[0] += cot[0]; };
      np.private_eq.custom_blocks.push_back(std::move(eq));
    }
    tc.problems.push_back(std::move(np));
  }
  return tc;
}

inline std::vector<toy_case> make_toy_suite() {
  return {make_toy_pair_quadratic(), make_toy_pair_private(), make_toy_single_constrained(),
          make_toy_ring_consensus(), make_toy_ring_constrained()};
}

}  // namespace asymm
