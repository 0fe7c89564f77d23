#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "asymm/asymm.hpp"
#include "asymm/graph.hpp"
#include "asymm/lagrangian.hpp"
#include "asymm/problem.hpp"

namespace asymm {

namespace detail {

// One block of the stacked primal-dual state, plus the convergence
// monitor's bookkeeping. Instead of mailboxes, each block logs what it
// would have broadcast (time-stamped) and readers pull in time order.
struct mm_block {
  primal_dual pd;
  double epsilon = 1e-1;
  double alpha = 1e-2;
  bool m_done = false;
  std::vector<std::vector<std::uint8_t>> S;
  std::set<int> received_from;
  int ascent_count = 0;
  double last_grad_norm = std::numeric_limits<double>::quiet_NaN();

  struct action {
    long time = 0;
    bool ascent = false;
    std::vector<std::uint8_t> col;  // own logic-AND column at a descent step
  };
  std::vector<action> log;
  std::map<int, std::size_t> cursor;  // next unread index into neighbor's log
};

}  // namespace detail

// Method of Multipliers on the consensus-reformulated problem: one
// block-coordinate gradient step on the network augmented Lagrangian per
// schedule entry, block gradient tests with the same tolerances, and the
// same staggered block-wise dual ascent and penalty growth. Block
// gradients read the true stacked state directly.
inline run_trace centralized_mm(const graph& g, const std::vector<node_problem>& problems,
                                const std::vector<int>& block_schedule, const run_options& opts) {
  if (static_cast<int>(problems.size()) != g.node_count)
    throw invalid_config("centralized_mm: one node_problem per graph node required");
  if (opts.iterations > 0 && block_schedule.empty())
    throw invalid_config("centralized_mm: empty block schedule");

  const int n = g.node_count;
  std::vector<detail::mm_block> blocks(n);
  for (int i = 0; i < n; ++i) {
    // Reuse the node-state initializer so both algorithms start from the
    // same parameter draws, then keep only the primal-dual part.
    node_state seed = make_node_state(g, problems[i], i, opts.hyper, opts.param_seed);
    if (!problems[i].init_private.empty() || !problems[i].init_shared.empty())
      set_initial_params(seed, problems[i].init_private, problems[i].init_shared);
    blocks[i].pd = std::move(seed.pd);
    blocks[i].epsilon = opts.hyper.eps0;
    blocks[i].alpha = opts.hyper.alpha;
    blocks[i].S.assign(g.diameter, std::vector<std::uint8_t>(g.degree(i) + 1, 0));
    for (int j : g.neighbors(i)) blocks[i].cursor[j] = 0;
  }

  auto col_index = [&](int i, int j) {
    const auto& nbrs = g.neighbors(i);
    return static_cast<int>(std::lower_bound(nbrs.begin(), nbrs.end(), j) - nbrs.begin());
  };
  auto reset_block = [&](detail::mm_block& b, int degree) {
    b.m_done = false;
    for (auto& row : b.S) row.assign(degree + 1, 0);
    b.epsilon = std::max(opts.hyper.eps_min, opts.hyper.eps_shrink * b.epsilon);
    b.received_from.clear();
  };

  run_trace trace;
  std::vector<detail::node_diag> diag(n);
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
    return std::tuple{avg_eq, avg_ineq, rows ? (eq + ineq) / rows : 0.0};
  };
  if (opts.diagnostics) {
    for (int i = 0; i < n; ++i) diag[i] = detail::compute_node_diag(problems[i], blocks[i].pd);
    auto [e0, i0, all0] = total_violations();
    trace.initial_violation = all0;
    trace.phase_violations.push_back(all0);
  }
  int completed_phases = 0;

  for (long ev = 0; ev < opts.iterations; ++ev) {
    const int i = block_schedule[ev % block_schedule.size()];
    trace.awake_sequence.push_back(i);
    detail::mm_block& blk = blocks[i];
    const int own = g.degree(i);

    // Pull neighbor actions since the last turn, in global time order.
    std::vector<std::pair<long, int>> pending;  // (time, neighbor)
    for (int j : g.neighbors(i))
      for (std::size_t k = blk.cursor[j]; k < blocks[j].log.size(); ++k)
        pending.push_back({blocks[j].log[k].time, j});
    std::sort(pending.begin(), pending.end());
    for (auto [time, j] : pending) {
      const auto& act = blocks[j].log[blk.cursor[j]++];
      if (!act.ascent) {
        if (!blk.received_from.count(j)) {
          const int jc = col_index(i, j);
          for (int l = 0; l < g.diameter; ++l) blk.S[l][jc] = act.col[l];
        }
      } else {
        blk.received_from.insert(j);
        for (auto& v : blk.S[g.diameter - 1]) v = 1;
        if (blk.m_done && blk.received_from.size() == g.neighbors(i).size())
          reset_block(blk, own);
      }
    }

    bool detected = true;
    for (const auto& v : blk.S[g.diameter - 1]) detected = detected && v;
    blk.last_grad_norm = std::numeric_limits<double>::quiet_NaN();

    if (!detected && !blk.m_done) {
      neighbor_view view;
      view.neighbors = &g.neighbors(i);
      view.ws_of = [&](int j) -> std::span<const double> { return blocks[j].pd.w_shared; };
      view.nu_rho_from = [&](int j) -> std::pair<std::span<const double>, double> {
        return {blocks[j].pd.mult.nu.at(i), blocks[j].pd.pen.rho.at(i)};
      };
      std::vector<double> gp, gs;
      local_lagrangian_grad(problems[i], blk.pd.w_priv, blk.pd.w_shared, view, blk.pd.mult,
                            blk.pd.pen, gp, gs);
      double sq = 0.0;
      for (double v : gp) sq += v * v;
      for (double v : gs) sq += v * v;
      const double grad_norm = std::sqrt(sq);
      blk.last_grad_norm = grad_norm;
      for (std::size_t k = 0; k < blk.pd.w_priv.size(); ++k) blk.pd.w_priv[k] -= blk.alpha * gp[k];
      for (std::size_t k = 0; k < blk.pd.w_shared.size(); ++k)
        blk.pd.w_shared[k] -= blk.alpha * gs[k];
      const bool passed = opts.convergence_test
                              ? opts.convergence_test(i, grad_norm, blk.epsilon)
                              : grad_norm <= blk.epsilon;
      if (passed) blk.S[0][own] = 1;
      for (int l = 1; l < g.diameter; ++l) {
        std::uint8_t prod = 1;
        for (const auto& v : blk.S[l - 1]) prod &= v;
        blk.S[l][own] = prod;
      }
      detail::mm_block::action a;
      a.time = ev;
      a.ascent = false;
      a.col.resize(g.diameter);
      for (int l = 0; l < g.diameter; ++l) a.col[l] = blk.S[l][own];
      blk.log.push_back(std::move(a));
    } else if (detected && !blk.m_done) {
      for (int j : g.neighbors(i)) {
        auto& nu = blk.pd.mult.nu[j];
        const double rho = blk.pd.pen.rho[j];
        const auto& ws_j = blocks[j].pd.w_shared;
        for (std::size_t k = 0; k < nu.size(); ++k)
          nu[k] += rho * (blk.pd.w_shared[k] - ws_j[k]);
      }
      const node_problem& np = problems[i];
      if (!np.private_eq.empty()) {
        auto phi = eval_constraints(np, np.private_eq, blk.pd.w_priv, blk.pd.w_shared);
        for (std::size_t k = 0; k < phi.size(); ++k)
          blk.pd.mult.lambda_priv[k] += blk.pd.pen.varrho_priv * phi[k];
      }
      if (!np.shared_eq.empty()) {
        auto phi = eval_constraints(np, np.shared_eq, blk.pd.w_priv, blk.pd.w_shared);
        for (std::size_t k = 0; k < phi.size(); ++k)
          blk.pd.mult.lambda_shared[k] += blk.pd.pen.varrho_shared * phi[k];
      }
      if (!np.private_ineq.empty()) {
        auto phi = eval_constraints(np, np.private_ineq, blk.pd.w_priv, blk.pd.w_shared);
        for (std::size_t k = 0; k < phi.size(); ++k)
          blk.pd.mult.mu_priv[k] =
              std::max(0.0, blk.pd.mult.mu_priv[k] + blk.pd.pen.zeta_priv * phi[k]);
      }
      if (!np.shared_ineq.empty()) {
        auto phi = eval_constraints(np, np.shared_ineq, blk.pd.w_priv, blk.pd.w_shared);
        for (std::size_t k = 0; k < phi.size(); ++k)
          blk.pd.mult.mu_shared[k] =
              std::max(0.0, blk.pd.mult.mu_shared[k] + blk.pd.pen.zeta_shared * phi[k]);
      }
      auto grow = [&](double& p, double factor) {
        p = std::min(opts.hyper.penalty_cap, p * factor);
      };
      for (auto& [j, rho] : blk.pd.pen.rho) grow(rho, opts.hyper.rho_growth());
      grow(blk.pd.pen.varrho_priv, opts.hyper.penalty_growth);
      grow(blk.pd.pen.varrho_shared, opts.hyper.penalty_growth);
      grow(blk.pd.pen.zeta_priv, opts.hyper.penalty_growth);
      grow(blk.pd.pen.zeta_shared, opts.hyper.penalty_growth);
      blk.m_done = true;
      blk.ascent_count += 1;
      detail::mm_block::action a;
      a.time = ev;
      a.ascent = true;
      blk.log.push_back(std::move(a));
      if (blk.received_from.size() == g.neighbors(i).size()) reset_block(blk, own);
    }

    if (opts.record_iterates) trace.iterates.push_back({i, blk.pd.w_shared});

    if (opts.diagnostics) {
      diag[i] = detail::compute_node_diag(problems[i], blk.pd);
      auto [avg_eq, avg_ineq, avg_all] = total_violations();
      trace_row row;
      row.event_index = ev;
      row.node = i;
      row.grad_norm = blk.last_grad_norm;
      row.avg_eq_violation = avg_eq;
      row.avg_ineq_violation = avg_ineq;
      row.avg_violation = avg_all;
      double worst = 0.0;
      std::vector<double> diff;
      for (auto [a2, b2] : g.edges) {
        double sq = 0.0;
        const auto& wa = blocks[a2].pd.w_shared;
        const auto& wb = blocks[b2].pd.w_shared;
        for (std::size_t k = 0; k < wa.size(); ++k) sq += (wa[k] - wb[k]) * (wa[k] - wb[k]);
        worst = std::max(worst, std::sqrt(sq));
      }
      row.consensus_disagreement = worst;
      double lagr = 0.0;
      for (const auto& d : diag) lagr += d.lagr_part;
      for (int a2 = 0; a2 < n; ++a2)
        for (int b2 : g.neighbors(a2)) {
          const auto& wa = blocks[a2].pd.w_shared;
          const auto& wb = blocks[b2].pd.w_shared;
          diff.resize(wa.size());
          for (std::size_t k = 0; k < wa.size(); ++k) diff[k] = wa[k] - wb[k];
          lagr += v_penalty(blocks[a2].pd.pen.rho.at(b2), blocks[a2].pd.mult.nu.at(b2), diff);
        }
      row.lagrangian_value = lagr;
      int min_ascents = blocks[0].ascent_count;
      for (const auto& b : blocks) min_ascents = std::min(min_ascents, b.ascent_count);
      if (min_ascents > completed_phases) {
        completed_phases = min_ascents;
        trace.phase_violations.push_back(avg_all);
      }
      row.phase_count = completed_phases;
      trace.rows.push_back(row);
    }
  }

  // Expose final parameters through node_state so callers can evaluate
  // predictors the same way for both algorithms.
  for (int i = 0; i < n; ++i) {
    node_state st = make_node_state(g, problems[i], i, opts.hyper, opts.param_seed);
    st.pd = std::move(blocks[i].pd);
    st.ascent_count = blocks[i].ascent_count;
    trace.final_states.push_back(std::move(st));
  }
  return trace;
}

}  // namespace asymm
