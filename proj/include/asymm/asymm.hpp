#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <set>
#include <span>
#include <vector>

#include "asymm/graph.hpp"
#include "asymm/lagrangian.hpp"
#include "asymm/problem.hpp"
#include "asymm/rng.hpp"

namespace asymm {

struct hyperparams {
  double alpha = 1e-2;           // gradient stepsize
  double eps0 = 1e-1;            // initial convergence tolerance
  double eps_min = 1e-6;
  double eps_shrink = 0.5;       // tolerance factor per phase
  double penalty0 = 1.0;
  double consensus_penalty0 = std::numeric_limits<double>::quiet_NaN();  // default: penalty0
  double penalty_growth = 2.0;   // penalty factor per ascent
  double consensus_growth = std::numeric_limits<double>::quiet_NaN();    // default: penalty_growth
  double penalty_cap = 1e6;

  double rho0() const { return std::isnan(consensus_penalty0) ? penalty0 : consensus_penalty0; }
  double rho_growth() const {
    return std::isnan(consensus_growth) ? penalty_growth : consensus_growth;
  }
};

// Inter-node broadcast payloads. An awake node in the descent branch
// casts its shared-weight copy together with its own logic-AND column;
// in the ascent branch it casts the edge multiplier and penalty.
struct message {
  enum class kind { weight_cast, multiplier_cast };
  kind type = kind::weight_cast;
  int from = 0;
  int to = 0;
  std::vector<double> ws;       // weight_cast
  std::vector<std::uint8_t> s_col;
  std::vector<double> nu;       // multiplier_cast
  double rho = 0.0;
};

// Gradient-test override used by the protocol test-bench; the production
// test is ||grad|| <= eps.
using convergence_test_fn = std::function<bool(int node, double grad_norm, double eps)>;

struct node_state {
  int id = 0;
  std::vector<int> neighbors;   // sorted
  int diam = 1;                 // d_G

  primal_dual pd;
  std::map<int, std::vector<double>> neighbor_ws;                   // last received w^s|_j
  std::map<int, std::pair<std::vector<double>, double>> neighbor_nu_rho;  // last received (nu_ji, rho_ji)

  std::vector<std::vector<std::uint8_t>> S;  // diam rows x (|N_i|+1) cols, own column last
  bool m_done = false;
  std::set<int> received_nu_from;

  double epsilon = 1e-1;
  double alpha = 1e-2;
  hyperparams hyper;
  convergence_test_fn convergence_test;

  int ascent_count = 0;
  double last_grad_norm = std::numeric_limits<double>::quiet_NaN();

  int columns() const { return static_cast<int>(neighbors.size()) + 1; }  // d_i
  int own_col() const { return static_cast<int>(neighbors.size()); }

  int col_of(int j) const {
    for (std::size_t k = 0; k < neighbors.size(); ++k)
      if (neighbors[k] == j) return static_cast<int>(k);
    throw unknown_sender("node " + std::to_string(j) + " is not a neighbor of " +
                         std::to_string(id));
  }

  bool bottom_row_all_ones() const {
    for (const auto& v : S.back())
      if (!v) return false;
    return true;
  }

  std::vector<std::uint8_t> own_column() const {
    std::vector<std::uint8_t> col(diam);
    for (int l = 0; l < diam; ++l) col[l] = S[l][own_col()];
    return col;
  }

  void reset_phase() {
    m_done = false;
    for (auto& row : S) row.assign(columns(), 0);
    epsilon = std::max(hyper.eps_min, hyper.eps_shrink * epsilon);
    received_nu_from.clear();
  }

  neighbor_view view() const {
    neighbor_view v;
    v.neighbors = &neighbors;
    v.ws_of = [this](int j) -> std::span<const double> { return neighbor_ws.at(j); };
    v.nu_rho_from = [this](int j) -> std::pair<std::span<const double>, double> {
      const auto& [nu, rho] = neighbor_nu_rho.at(j);
      return {nu, rho};
    };
    return v;
  }
};

// Initial node state: multipliers zero, penalties at penalty0, S zeroed.
// Shared weights start from one network-wide draw so every local copy
// (and every neighbor's view of it) agrees at event zero; private weights
// get per-node draws.
inline node_state make_node_state(const graph& g, const node_problem& np, int node_id,
                                  const hyperparams& hyper, std::uint64_t param_seed) {
  node_state st;
  st.id = node_id;
  st.neighbors = g.neighbors(node_id);
  st.diam = g.diameter;
  st.hyper = hyper;
  st.epsilon = hyper.eps0;
  st.alpha = hyper.alpha;

  if (np.private_spec) {
    rng r(rng::sub_seed(param_seed, 1000 + node_id));
    st.pd.w_priv = init_params(*np.private_spec, r);
  } else {
    st.pd.w_priv.assign(np.raw_private_dim, 0.0);
  }
  if (np.shared_spec) {
    rng r(rng::sub_seed(param_seed, 7));
    st.pd.w_shared = init_params(*np.shared_spec, r);
  } else {
    st.pd.w_shared.assign(np.raw_shared_dim, 0.0);
  }

  st.pd.mult.lambda_priv.assign(multiplicity(np, np.private_eq), 0.0);
  st.pd.mult.lambda_shared.assign(multiplicity(np, np.shared_eq), 0.0);
  st.pd.mult.mu_priv.assign(multiplicity(np, np.private_ineq), 0.0);
  st.pd.mult.mu_shared.assign(multiplicity(np, np.shared_ineq), 0.0);
  st.pd.pen.varrho_priv = st.pd.pen.varrho_shared = hyper.penalty0;
  st.pd.pen.zeta_priv = st.pd.pen.zeta_shared = hyper.penalty0;
  for (int j : st.neighbors) {
    st.pd.mult.nu[j].assign(st.pd.w_shared.size(), 0.0);
    st.pd.pen.rho[j] = hyper.rho0();
    st.neighbor_ws[j] = st.pd.w_shared;  // identical network-wide init
    st.neighbor_nu_rho[j] = {std::vector<double>(st.pd.w_shared.size(), 0.0), hyper.rho0()};
  }
  st.S.assign(st.diam, std::vector<std::uint8_t>(st.columns(), 0));
  return st;
}

// Explicit initial parameter blocks (toy problems pin their start point);
// empty vectors keep the seeded values.
inline void set_initial_params(node_state& st, const std::vector<double>& w_priv,
                               const std::vector<double>& w_shared) {
  if (!w_priv.empty()) st.pd.w_priv = w_priv;
  if (!w_shared.empty()) {
    st.pd.w_shared = w_shared;
    for (auto& [j, ws] : st.neighbor_ws) ws = w_shared;
  }
}

namespace detail {

inline void grow_penalties(node_state& st) {
  auto grow = [&st](double& p, double factor) {
    p = std::min(st.hyper.penalty_cap, p * factor);
  };
  for (auto& [j, rho] : st.pd.pen.rho) grow(rho, st.hyper.rho_growth());
  grow(st.pd.pen.varrho_priv, st.hyper.penalty_growth);
  grow(st.pd.pen.varrho_shared, st.hyper.penalty_growth);
  grow(st.pd.pen.zeta_priv, st.hyper.penalty_growth);
  grow(st.pd.pen.zeta_shared, st.hyper.penalty_growth);
}

}  // namespace detail

// One awake event of Algorithm 1. Either a primal descent step with
// logic-AND bookkeeping and a weight broadcast, or (once the bottom row
// of S is all ones) one multiplier/penalty ascent with a multiplier
// broadcast; after the ascent the node stays passive until it has the
// fresh edge multipliers from every neighbor.
inline std::vector<message> on_awake(node_state& st, const node_problem& np) {
  std::vector<message> out;
  st.last_grad_norm = std::numeric_limits<double>::quiet_NaN();
  const bool detected = st.bottom_row_all_ones();

  if (!detected && !st.m_done) {
    std::vector<double> gp, gs;
    local_lagrangian_grad(np, st.pd.w_priv, st.pd.w_shared, st.view(), st.pd.mult, st.pd.pen, gp,
                          gs);
    double sq = 0.0;
    for (double v : gp) sq += v * v;
    for (double v : gs) sq += v * v;
    const double grad_norm = std::sqrt(sq);
    st.last_grad_norm = grad_norm;

    // Algorithm 1 displays the w^s|_i update; w_i is optimized by the
    // same problem and updated nowhere else, so it steps here too.
    for (std::size_t k = 0; k < st.pd.w_priv.size(); ++k) st.pd.w_priv[k] -= st.alpha * gp[k];
    for (std::size_t k = 0; k < st.pd.w_shared.size(); ++k) st.pd.w_shared[k] -= st.alpha * gs[k];

    const bool passed = st.convergence_test ? st.convergence_test(st.id, grad_norm, st.epsilon)
                                            : grad_norm <= st.epsilon;
    if (passed) st.S[0][st.own_col()] = 1;
    for (int l = 1; l < st.diam; ++l) {
      std::uint8_t prod = 1;
      for (int b = 0; b < st.columns(); ++b) prod &= st.S[l - 1][b];
      st.S[l][st.own_col()] = prod;
    }

    auto col = st.own_column();
    for (int j : st.neighbors) {
      message m;
      m.type = message::kind::weight_cast;
      m.from = st.id;
      m.to = j;
      m.ws = st.pd.w_shared;
      m.s_col = col;
      out.push_back(std::move(m));
    }
    return out;
  }

  if (detected && !st.m_done) {
    // nu_ij += rho_ij (ws_i - ws_j), then constraint multipliers.
    for (int j : st.neighbors) {
      auto& nu = st.pd.mult.nu[j];
      const double rho = st.pd.pen.rho[j];
      const auto& ws_j = st.neighbor_ws[j];
      for (std::size_t k = 0; k < nu.size(); ++k)
        nu[k] += rho * (st.pd.w_shared[k] - ws_j[k]);
    }
    if (!np.private_eq.empty()) {
      auto phi = eval_constraints(np, np.private_eq, st.pd.w_priv, st.pd.w_shared);
      for (std::size_t k = 0; k < phi.size(); ++k)
        st.pd.mult.lambda_priv[k] += st.pd.pen.varrho_priv * phi[k];
    }
    if (!np.shared_eq.empty()) {
      auto phi = eval_constraints(np, np.shared_eq, st.pd.w_priv, st.pd.w_shared);
      for (std::size_t k = 0; k < phi.size(); ++k)
        st.pd.mult.lambda_shared[k] += st.pd.pen.varrho_shared * phi[k];
    }
    if (!np.private_ineq.empty()) {
      auto phi = eval_constraints(np, np.private_ineq, st.pd.w_priv, st.pd.w_shared);
      for (std::size_t k = 0; k < phi.size(); ++k)
        st.pd.mult.mu_priv[k] = std::max(0.0, st.pd.mult.mu_priv[k] + st.pd.pen.zeta_priv * phi[k]);
    }
    if (!np.shared_ineq.empty()) {
      auto phi = eval_constraints(np, np.shared_ineq, st.pd.w_priv, st.pd.w_shared);
      for (std::size_t k = 0; k < phi.size(); ++k)
        st.pd.mult.mu_shared[k] =
            std::max(0.0, st.pd.mult.mu_shared[k] + st.pd.pen.zeta_shared * phi[k]);
    }
    detail::grow_penalties(st);
    st.m_done = true;
    st.ascent_count += 1;
    for (int j : st.neighbors) {
      message m;
      m.type = message::kind::multiplier_cast;
      m.from = st.id;
      m.to = j;
      m.nu = st.pd.mult.nu[j];
      m.rho = st.pd.pen.rho[j];
      out.push_back(std::move(m));
    }
    // The fresh multipliers may already be in from every neighbor (always
    // true for an isolated node); then the next minimization starts now.
    if (st.received_nu_from.size() == st.neighbors.size()) st.reset_phase();
    return out;
  }

  return out;  // m_done: wait for the remaining multiplier casts
}

// Idle-time message handling.
inline void on_idle_receive(node_state& st, const message& msg) {
  const int j = msg.from;
  const int jc = st.col_of(j);  // throws unknown_sender
  if (msg.type == message::kind::weight_cast) {
    st.neighbor_ws[j] = msg.ws;
    // A column that arrives after that neighbor's multiplier cast belongs
    // to its next minimization phase; drop it, keep the weights.
    if (!st.received_nu_from.count(j)) {
      for (int l = 0; l < st.diam; ++l) st.S[l][jc] = msg.s_col[l];
    }
    return;
  }
  st.neighbor_nu_rho[j] = {msg.nu, msg.rho};
  st.received_nu_from.insert(j);
  for (int b = 0; b < st.columns(); ++b) st.S[st.diam - 1][b] = 1;
  if (st.m_done && st.received_nu_from.size() == st.neighbors.size()) st.reset_phase();
}

// ---------------------------------------------------------------------------
// Run orchestration
// ---------------------------------------------------------------------------

struct trace_row {
  long event_index = 0;
  int node = 0;
  double grad_norm = std::numeric_limits<double>::quiet_NaN();
  double avg_eq_violation = 0.0;
  double avg_ineq_violation = 0.0;
  double avg_violation = 0.0;  // combined mean over all constraint rows
  double consensus_disagreement = 0.0;
  double lagrangian_value = 0.0;
  int phase_count = 0;
};

struct run_trace {
  std::vector<trace_row> rows;
  double initial_violation = 0.0;
  std::vector<double> phase_violations;  // avg total violation, [0] = initial
  std::vector<int> awake_sequence;
  std::vector<node_state> final_states;
  // per-event (node, w^s|_i after the event); filled when record_iterates
  std::vector<std::pair<int, std::vector<double>>> iterates;
};

struct run_options {
  long iterations = 0;
  hyperparams hyper;
  std::uint64_t schedule_seed = 0;
  std::uint64_t param_seed = 0;
  std::vector<int> explicit_schedule;  // overrides the seeded scheduler
  bool diagnostics = true;
  bool record_iterates = false;
  convergence_test_fn convergence_test;
  std::function<void(const trace_row&)> on_event;
  std::function<void(int phase, double avg_violation)> on_phase;
};

namespace detail {

struct node_diag {
  double sum_abs_eq = 0.0;
  double sum_pos_ineq = 0.0;
  long eq_rows = 0;
  long ineq_rows = 0;
  double lagr_part = 0.0;
};

// One pass per constraint system: violation sums and the v/q Lagrangian
// terms come from the same evaluation.
inline node_diag compute_node_diag(const node_problem& np, const primal_dual& pd) {
  node_diag d;
  d.lagr_part = objective_value(np, pd.w_priv, pd.w_shared);
  auto add_eq = [&](const constraint_system& sys, const std::vector<double>& lambda, double c) {
    if (sys.empty()) return;
    auto phi = eval_constraints(np, sys, pd.w_priv, pd.w_shared);
    for (double v : phi) {
      d.sum_abs_eq += std::fabs(v);
      ++d.eq_rows;
    }
    d.lagr_part += v_penalty(c, lambda, phi);
  };
  auto add_ineq = [&](const constraint_system& sys, const std::vector<double>& mu, double c) {
    if (sys.empty()) return;
    auto phi = eval_constraints(np, sys, pd.w_priv, pd.w_shared);
    for (double v : phi) {
      d.sum_pos_ineq += std::max(0.0, v);
      ++d.ineq_rows;
    }
    d.lagr_part += q_penalty_sum(c, mu, phi);
  };
  add_eq(np.private_eq, pd.mult.lambda_priv, pd.pen.varrho_priv);
  add_eq(np.shared_eq, pd.mult.lambda_shared, pd.pen.varrho_shared);
  add_ineq(np.private_ineq, pd.mult.mu_priv, pd.pen.zeta_priv);
  add_ineq(np.shared_ineq, pd.mult.mu_shared, pd.pen.zeta_shared);
  return d;
}

inline double consensus_disagreement(const graph& g, const std::vector<node_state>& states) {
  double worst = 0.0;
  for (auto [i, j] : g.edges) {
    double sq = 0.0;
    const auto& a = states[i].pd.w_shared;
    const auto& b = states[j].pd.w_shared;
    for (std::size_t k = 0; k < a.size(); ++k) sq += (a[k] - b[k]) * (a[k] - b[k]);
    worst = std::max(worst, std::sqrt(sq));
  }
  return worst;
}

}  // namespace detail

// Single-threaded deterministic event loop: the scheduler picks one node,
// pending messages are handled first (idle), then the node wakes.
inline run_trace run(const graph& g, const std::vector<node_problem>& problems,
                     const run_options& opts) {
  if (static_cast<int>(problems.size()) != g.node_count)
    throw invalid_config("run: one node_problem per graph node required");

  std::vector<node_state> states;
  states.reserve(g.node_count);
  for (int i = 0; i < g.node_count; ++i) {
    states.push_back(make_node_state(g, problems[i], i, opts.hyper, opts.param_seed));
    if (!problems[i].init_private.empty() || !problems[i].init_shared.empty())
      set_initial_params(states.back(), problems[i].init_private, problems[i].init_shared);
    states.back().convergence_test = opts.convergence_test;
  }

  std::vector<std::deque<message>> mailbox(g.node_count);
  schedule sched(g.node_count, opts.schedule_seed);

  run_trace trace;
  trace.rows.reserve(opts.diagnostics ? opts.iterations : 0);

  std::vector<detail::node_diag> diag(g.node_count);
  auto total_violations = [&]() {
    double eq = 0.0, ineq = 0.0;
    long eq_rows = 0, ineq_rows = 0;
    for (const auto& d : diag) {
      eq += d.sum_abs_eq;
      ineq += d.sum_pos_ineq;
      eq_rows += d.eq_rows;
      ineq_rows += d.ineq_rows;
    }
    const double avg_eq = eq_rows ? eq / eq_rows : 0.0;
    const double avg_ineq = ineq_rows ? ineq / ineq_rows : 0.0;
    const long rows = eq_rows + ineq_rows;
    const double avg_all = rows ? (eq + ineq) / rows : 0.0;
    return std::tuple{avg_eq, avg_ineq, avg_all};
  };

  if (opts.diagnostics) {
    for (int i = 0; i < g.node_count; ++i)
      diag[i] = detail::compute_node_diag(problems[i], states[i].pd);
    auto [e0, i0, all0] = total_violations();
    trace.initial_violation = all0;
    trace.phase_violations.push_back(all0);
    if (opts.on_phase) opts.on_phase(0, all0);
  }
  int completed_phases = 0;

  for (long ev = 0; ev < opts.iterations; ++ev) {
    const int i = opts.explicit_schedule.empty()
                      ? sched.next_awakening()
                      : opts.explicit_schedule[ev % opts.explicit_schedule.size()];
    trace.awake_sequence.push_back(i);

    while (!mailbox[i].empty()) {
      on_idle_receive(states[i], mailbox[i].front());
      mailbox[i].pop_front();
    }
    auto msgs = on_awake(states[i], problems[i]);
    for (auto& m : msgs) mailbox[m.to].push_back(std::move(m));

    if (opts.record_iterates) trace.iterates.push_back({i, states[i].pd.w_shared});

    if (opts.diagnostics) {
      diag[i] = detail::compute_node_diag(problems[i], states[i].pd);
      auto [avg_eq, avg_ineq, avg_all] = total_violations();
      trace_row row;
      row.event_index = ev;
      row.node = i;
      row.grad_norm = states[i].last_grad_norm;
      row.avg_eq_violation = avg_eq;
      row.avg_ineq_violation = avg_ineq;
      row.avg_violation = avg_all;
      row.consensus_disagreement = detail::consensus_disagreement(g, states);
      double lagr = 0.0;
      for (const auto& d : diag) lagr += d.lagr_part;
      std::vector<double> diff;
      for (int a = 0; a < g.node_count; ++a)
        for (int b : g.neighbors(a)) {
          const auto& wa = states[a].pd.w_shared;
          const auto& wb = states[b].pd.w_shared;
          diff.resize(wa.size());
          for (std::size_t k = 0; k < wa.size(); ++k) diff[k] = wa[k] - wb[k];
          lagr += v_penalty(states[a].pd.pen.rho.at(b), states[a].pd.mult.nu.at(b), diff);
        }
      row.lagrangian_value = lagr;

      int min_ascents = states[0].ascent_count;
      for (const auto& st : states) min_ascents = std::min(min_ascents, st.ascent_count);
      if (min_ascents > completed_phases) {
        completed_phases = min_ascents;
        trace.phase_violations.push_back(avg_all);
        if (opts.on_phase) opts.on_phase(completed_phases, avg_all);
      }
      row.phase_count = completed_phases;
      if (opts.on_event) opts.on_event(row);
      trace.rows.push_back(row);
    }
  }

  trace.final_states = std::move(states);
  return trace;
}

}  // namespace asymm
