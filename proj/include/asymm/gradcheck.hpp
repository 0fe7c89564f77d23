#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "asymm/lagrangian.hpp"
#include "asymm/problem.hpp"
#include "asymm/rng.hpp"
#include "asymm/scenarios.hpp"

namespace asymm {

// Central-finite-difference verification of local_lagrangian_grad on
// randomized states. States whose inequality terms sit near the
// max{0, mu + zeta*phi} kink are checked against the looser tolerance.
struct gradcheck_result {
  int states = 0;
  int kink_states = 0;
  double max_rel_err = 0.0;       // over smooth states
  double max_rel_err_kink = 0.0;  // over near-kink states

  bool pass(double tol, double kink_tol) const {
    return states > 0 && max_rel_err < tol && max_rel_err_kink < kink_tol;
  }
};

namespace detail {

struct random_local_state {
  std::vector<double> wp, ws;
  std::map<int, std::vector<double>> neighbor_ws;
  std::map<int, std::pair<std::vector<double>, double>> neighbor_nu_rho;
  multiplier_set mult;
  penalty_set pen;
  std::vector<int> neighbors;

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

inline random_local_state randomize_state(const graph& g, const node_problem& np, int node,
                                          rng& r, bool force_kink) {
  random_local_state st;
  st.neighbors = g.neighbors(node);
  st.wp.resize(np.private_dim());
  st.ws.resize(np.shared_dim());
  for (auto& v : st.wp) v = r.next_uniform(-1.0, 1.0);
  for (auto& v : st.ws) v = r.next_uniform(-1.0, 1.0);
  for (int j : st.neighbors) {
    std::vector<double> wj(np.shared_dim()), nu_ij(np.shared_dim()), nu_ji(np.shared_dim());
    for (auto& v : wj) v = r.next_uniform(-1.0, 1.0);
    for (auto& v : nu_ij) v = r.next_uniform(-0.5, 0.5);
    for (auto& v : nu_ji) v = r.next_uniform(-0.5, 0.5);
    st.neighbor_ws[j] = std::move(wj);
    st.mult.nu[j] = std::move(nu_ij);
    st.neighbor_nu_rho[j] = {std::move(nu_ji), r.next_uniform(0.5, 3.0)};
    st.pen.rho[j] = r.next_uniform(0.5, 3.0);
  }
  st.mult.lambda_priv.resize(multiplicity(np, np.private_eq));
  st.mult.lambda_shared.resize(multiplicity(np, np.shared_eq));
  st.mult.mu_priv.resize(multiplicity(np, np.private_ineq));
  st.mult.mu_shared.resize(multiplicity(np, np.shared_ineq));
  for (auto& v : st.mult.lambda_priv) v = r.next_uniform(-1.0, 1.0);
  for (auto& v : st.mult.lambda_shared) v = r.next_uniform(-1.0, 1.0);
  for (auto& v : st.mult.mu_priv) v = r.next_uniform(0.0, 1.0);
  for (auto& v : st.mult.mu_shared) v = r.next_uniform(0.0, 1.0);
  st.pen.varrho_priv = r.next_uniform(0.5, 3.0);
  st.pen.varrho_shared = r.next_uniform(0.5, 3.0);
  st.pen.zeta_priv = r.next_uniform(0.5, 3.0);
  st.pen.zeta_shared = r.next_uniform(0.5, 3.0);

  if (force_kink && !st.mult.mu_priv.empty()) {
    // place mu so that mu + zeta*phi straddles zero
    auto phi = eval_constraints(np, np.private_ineq, st.wp, st.ws);
    for (std::size_t k = 0; k < phi.size(); ++k)
      st.mult.mu_priv[k] =
          std::max(0.0, -st.pen.zeta_priv * phi[k] + r.next_uniform(-1e-7, 1e-7));
  }
  return st;
}

inline bool near_q_kink(const node_problem& np, const random_local_state& st, double band) {
  auto check = [&](const constraint_system& sys, const std::vector<double>& mu, double zeta) {
    if (sys.empty()) return false;
    auto phi = eval_constraints(np, sys, st.wp, st.ws);
    for (std::size_t k = 0; k < phi.size(); ++k)
      if (std::fabs(mu[k] + zeta * phi[k]) < band) return true;
    return false;
  };
  return check(np.private_ineq, st.mult.mu_priv, st.pen.zeta_priv) ||
         check(np.shared_ineq, st.mult.mu_shared, st.pen.zeta_shared);
}

inline double state_max_rel_err(const node_problem& np, random_local_state& st) {
  std::vector<double> gp, gs;
  local_lagrangian_grad(np, st.wp, st.ws, st.view(), st.mult, st.pen, gp, gs);
  double worst = 0.0;
  auto probe = [&](std::vector<double>& block, std::size_t k, double analytic) {
    const double x0 = block[k];
    const double h = 1e-6 * std::max(1.0, std::fabs(x0));
    block[k] = x0 + h;
    const double fp = local_lagrangian(np, st.wp, st.ws, st.view(), st.mult, st.pen);
    block[k] = x0 - h;
    const double fm = local_lagrangian(np, st.wp, st.ws, st.view(), st.mult, st.pen);
    block[k] = x0;
    const double fd = (fp - fm) / (2.0 * h);
    const double rel = std::fabs(fd - analytic) / std::max({1.0, std::fabs(fd), std::fabs(analytic)});
    worst = std::max(worst, rel);
  };
  for (std::size_t k = 0; k < st.wp.size(); ++k) probe(st.wp, k, gp[k]);
  for (std::size_t k = 0; k < st.ws.size(); ++k) probe(st.ws, k, gs[k]);
  return worst;
}

}  // namespace detail

// Random instances shaped like one scenario family.
inline gradcheck_result check_gradients_digit(int n_states, std::uint64_t seed) {
  digit_config cfg;
  cfg.node_count = 3;
  cfg.supervised_per_node = 4;
  cfg.unsupervised_per_node = 3;
  cfg.feature_dim = 3;
  cfg.private_hidden = 2;
  cfg.shared_hidden = 2;
  cfg.test_per_class = 1;
  cfg.data_seed = seed;
  auto sc = build_digit_scenario(cfg);
  rng r(rng::sub_seed(seed, 0x6C));
  gradcheck_result res;
  for (int s = 0; s < n_states; ++s) {
    const int node = static_cast<int>(r.next_below(sc.problems.size()));
    auto st = detail::randomize_state(sc.g, sc.problems[node], node, r, false);
    const double err = detail::state_max_rel_err(sc.problems[node], st);
    ++res.states;
    res.max_rel_err = std::max(res.max_rel_err, err);
  }
  return res;
}

inline gradcheck_result check_gradients_document(int n_states, std::uint64_t seed) {
  document_config cfg;
  cfg.supervised_per_node = 3;
  cfg.unsupervised_total = 6;
  cfg.words_per_class = 2;
  cfg.data_seed = seed;
  auto sc = build_document_scenario(cfg);
  rng r(rng::sub_seed(seed, 0x6D));
  gradcheck_result res;
  for (int s = 0; s < n_states; ++s) {
    const int node = static_cast<int>(r.next_below(sc.problems.size()));
    auto st = detail::randomize_state(sc.g, sc.problems[node], node, r, false);
    const double err = detail::state_max_rel_err(sc.problems[node], st);
    ++res.states;
    res.max_rel_err = std::max(res.max_rel_err, err);
  }
  return res;
}

inline gradcheck_result check_gradients_toys(int n_states, std::uint64_t seed) {
  auto suite = make_toy_suite();
  rng r(rng::sub_seed(seed, 0x6E));
  gradcheck_result res;
  for (int s = 0; s < n_states; ++s) {
    const auto& tc = suite[s % suite.size()];
    const int node = static_cast<int>(r.next_below(tc.problems.size()));
    const bool force_kink = (s % 5 == 2);  // exercise the q kink on the constrained toy
    auto st = detail::randomize_state(tc.g, tc.problems[node], node, r, force_kink);
    const double err = detail::state_max_rel_err(tc.problems[node], st);
    ++res.states;
    if (detail::near_q_kink(tc.problems[node], st, 1e-4)) {
      ++res.kink_states;
      res.max_rel_err_kink = std::max(res.max_rel_err_kink, err);
    } else {
      res.max_rel_err = std::max(res.max_rel_err, err);
    }
  }
  return res;
}

}  // namespace asymm
