#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "asymm/errors.hpp"
#include "asymm/graph.hpp"
#include "asymm/problem.hpp"

namespace asymm {

// Multipliers for one node: consensus vectors per neighbor edge, equality
// and inequality vectors sized by the constraint system multiplicities.
// Inequality multipliers stay componentwise nonnegative.
struct multiplier_set {
  std::map<int, std::vector<double>> nu;  // nu_ij keyed by neighbor j
  std::vector<double> lambda_priv;
  std::vector<double> lambda_shared;
  std::vector<double> mu_priv;
  std::vector<double> mu_shared;
};

// Strictly positive penalty parameters, nondecreasing over a run.
struct penalty_set {
  std::map<int, double> rho;  // rho_ij keyed by neighbor j
  double varrho_priv = 1.0;
  double varrho_shared = 1.0;
  double zeta_priv = 1.0;
  double zeta_shared = 1.0;
};

// One node's primal and dual variables.
struct primal_dual {
  std::vector<double> w_priv;
  std::vector<double> w_shared;
  multiplier_set mult;
  penalty_set pen;
};

// v_c(a,b) = a'b + (c/2)||b||^2
inline double v_penalty(double c, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw dimension_mismatch("v_penalty: |a| != |b|");
  double dot = 0.0, sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    sq += b[k] * b[k];
  }
  return dot + 0.5 * c * sq;
}

// q_c(a,b) = (1/2c)(max{0, a+cb}^2 - a^2), componentwise.
inline std::vector<double> q_penalty(double c, std::span<const double> a,
                                     std::span<const double> b) {
  if (a.size() != b.size()) throw dimension_mismatch("q_penalty: |a| != |b|");
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double m = std::max(0.0, a[k] + c * b[k]);
    out[k] = (m * m - a[k] * a[k]) / (2.0 * c);
  }
  return out;
}

inline double q_penalty_sum(double c, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw dimension_mismatch("q_penalty: |a| != |b|");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double m = std::max(0.0, a[k] + c * b[k]);
    s += (m * m - a[k] * a[k]) / (2.0 * c);
  }
  return s;
}

// d/db of 1'q_c(a,b): the max-branch value, which is the unique C^1
// extension at the kink a + cb = 0.
inline void q_penalty_cotangent(double c, std::span<const double> a, std::span<const double> b,
                                std::vector<double>& cot) {
  cot.resize(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) cot[k] = std::max(0.0, a[k] + c * b[k]);
}

// How a node sees its neighborhood: the last received shared-weight copy
// w^s|_j and the last received mirrored edge multiplier (nu_ji, rho_ji).
struct neighbor_view {
  const std::vector<int>* neighbors = nullptr;
  std::function<std::span<const double>(int)> ws_of;
  std::function<std::pair<std::span<const double>, double>(int)> nu_rho_from;
};

namespace detail {

// Constraint-system contribution to the local Lagrangian value.
inline double system_terms(const node_problem& np, std::span<const double> wp,
                           std::span<const double> ws, const multiplier_set& mult,
                           const penalty_set& pen) {
  double total = 0.0;
  if (!np.private_eq.empty()) {
    auto phi = eval_constraints(np, np.private_eq, wp, ws);
    total += v_penalty(pen.varrho_priv, mult.lambda_priv, phi);
  }
  if (!np.shared_eq.empty()) {
    auto phi = eval_constraints(np, np.shared_eq, wp, ws);
    total += v_penalty(pen.varrho_shared, mult.lambda_shared, phi);
  }
  if (!np.private_ineq.empty()) {
    auto phi = eval_constraints(np, np.private_ineq, wp, ws);
    total += q_penalty_sum(pen.zeta_priv, mult.mu_priv, phi);
  }
  if (!np.shared_ineq.empty()) {
    auto phi = eval_constraints(np, np.shared_ineq, wp, ws);
    total += q_penalty_sum(pen.zeta_shared, mult.mu_shared, phi);
  }
  return total;
}

}  // namespace detail

// Local augmented Lagrangian of node i: every term of the network
// Lagrangian that depends on w|_i. Besides the node's own edge terms
// v_{rho_ij}(nu_ij, ws_i - ws_j) this includes the mirrored neighbor
// terms v_{rho_ji}(nu_ji, ws_j - ws_i), evaluated with the last received
// nu_ji, rho_ji, so that the gradient below is the exact block gradient
// of the network Lagrangian.
inline double local_lagrangian(const node_problem& np, std::span<const double> wp,
                               std::span<const double> ws, const neighbor_view& nbr,
                               const multiplier_set& mult, const penalty_set& pen) {
  double total = objective_value(np, wp, ws);
  std::vector<double> diff(ws.size());
  for (int j : *nbr.neighbors) {
    auto ws_j = nbr.ws_of(j);
    if (ws_j.size() != ws.size()) throw dimension_mismatch("neighbor shared block size mismatch");
    for (std::size_t k = 0; k < ws.size(); ++k) diff[k] = ws[k] - ws_j[k];
    total += v_penalty(pen.rho.at(j), mult.nu.at(j), diff);
    auto [nu_ji, rho_ji] = nbr.nu_rho_from(j);
    for (std::size_t k = 0; k < ws.size(); ++k) diff[k] = ws_j[k] - ws[k];
    total += v_penalty(rho_ji, nu_ji, diff);
  }
  total += detail::system_terms(np, wp, ws, mult, pen);
  return total;
}

// Exact gradient of local_lagrangian w.r.t. (w_i, w^s|_i).
inline void local_lagrangian_grad(const node_problem& np, std::span<const double> wp,
                                  std::span<const double> ws, const neighbor_view& nbr,
                                  const multiplier_set& mult, const penalty_set& pen,
                                  std::vector<double>& grad_p, std::vector<double>& grad_s) {
  auto obj = objective_value_and_grad(np, wp, ws);
  grad_p = std::move(obj.grad_priv);
  grad_s = std::move(obj.grad_shared);

  // consensus: sum_j (nu_ij + rho_ij (ws_i - ws_j)) - (nu_ji + rho_ji (ws_j - ws_i))
  for (int j : *nbr.neighbors) {
    auto ws_j = nbr.ws_of(j);
    const auto& nu_ij = mult.nu.at(j);
    const double rho_ij = pen.rho.at(j);
    auto [nu_ji, rho_ji] = nbr.nu_rho_from(j);
    for (std::size_t k = 0; k < ws.size(); ++k) {
      grad_s[k] += nu_ij[k] + rho_ij * (ws[k] - ws_j[k]);
      grad_s[k] -= nu_ji[k] + rho_ji * (ws_j[k] - ws[k]);
    }
  }

  // v-term gradient: dPhi' (lambda + c Phi); q-term: dPhi' max{0, mu + c Phi}
  std::vector<double> cot;
  auto add_eq = [&](const constraint_system& sys, const std::vector<double>& lambda, double c) {
    if (sys.empty()) return;
    auto phi = eval_constraints(np, sys, wp, ws);
    cot.resize(phi.size());
    for (std::size_t k = 0; k < phi.size(); ++k) cot[k] = lambda[k] + c * phi[k];
    constraints_jtvp(np, sys, wp, ws, cot, grad_p, grad_s);
  };
  auto add_ineq = [&](const constraint_system& sys, const std::vector<double>& mu, double c) {
    if (sys.empty()) return;
    auto phi = eval_constraints(np, sys, wp, ws);
    q_penalty_cotangent(c, mu, phi, cot);
    constraints_jtvp(np, sys, wp, ws, cot, grad_p, grad_s);
  };
  add_eq(np.private_eq, mult.lambda_priv, pen.varrho_priv);
  add_eq(np.shared_eq, mult.lambda_shared, pen.varrho_shared);
  add_ineq(np.private_ineq, mult.mu_priv, pen.zeta_priv);
  add_ineq(np.shared_ineq, mult.mu_shared, pen.zeta_shared);
}

// Node i's contribution to the network Lagrangian excluding consensus
// terms; used by the diagnostics cache.
inline double node_lagrangian_part(const node_problem& np, const primal_dual& pd) {
  return objective_value_and_grad(np, pd.w_priv, pd.w_shared).value +
         detail::system_terms(np, pd.w_priv, pd.w_shared, pd.mult, pd.pen);
}

// Network augmented Lagrangian over the true stacked state; diagnostics
// only. Each directed pair (i,j), (j,i) contributes its own edge term.
inline double global_lagrangian(const graph& g, const std::vector<node_problem>& problems,
                                const std::vector<const primal_dual*>& states) {
  double total = 0.0;
  std::vector<double> diff;
  for (int i = 0; i < g.node_count; ++i) {
    total += node_lagrangian_part(problems[i], *states[i]);
    const auto& ws_i = states[i]->w_shared;
    for (int j : g.neighbors(i)) {
      const auto& ws_j = states[j]->w_shared;
      diff.resize(ws_i.size());
      for (std::size_t k = 0; k < ws_i.size(); ++k) diff[k] = ws_i[k] - ws_j[k];
      total += v_penalty(states[i]->pen.rho.at(j), states[i]->mult.nu.at(j), diff);
    }
  }
  return total;
}

}  // namespace asymm
