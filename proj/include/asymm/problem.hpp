#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "asymm/dataset.hpp"
#include "asymm/errors.hpp"
#include "asymm/logic.hpp"
#include "asymm/mlp.hpp"

namespace asymm {

// Which samples a constraint row group ranges over. Hard logic
// constraints range over all of D_i and D^s; supervised residuals only
// over the labeled part.
enum class sample_binding { all, supervised };

struct resolved_slot {
  bool shared = false;
  int index = 0;
};

struct resolved_product {
  std::vector<resolved_slot> on, off;
};
struct resolved_affine {
  std::vector<std::vector<resolved_slot>> products;
  double constant = 0.0;
};
using resolved_row = std::variant<resolved_product, resolved_affine>;

// A compiled point-wise constraint bound to the node's data. One group
// contributes arity() scalar rows per bound sample.
struct poly_group {
  poly_constraint pc;
  sample_binding binding = sample_binding::all;
  std::vector<resolved_row> resolved;
  bool needs_private = false;
  bool needs_shared = false;
};

// Point-wise supervised residual act(predicate) - y, one row per sample
// carrying a label for `predicate`.
struct residual_group {
  std::string predicate;
  resolved_slot slot;
};

// Escape hatch for problems that are not predictor-based (toy suites):
// a fixed number of rows evaluated directly on the parameter blocks.
struct custom_constraint_block {
  int rows = 0;
  std::function<void(std::span<const double>, std::span<const double>, std::span<double>)> eval;
  std::function<void(std::span<const double>, std::span<const double>, std::span<const double>,
                     std::span<double>, std::span<double>)>
      jtvp;
};

// Vector-valued constraint evaluator. Row order is fixed: poly groups in
// declaration order, then residual groups, then custom blocks; within a
// group, bound samples in dataset order (D_i first, then D^s), rows of
// one constraint adjacent per sample.
struct constraint_system {
  constraint_kind kind = constraint_kind::equality;
  std::vector<poly_group> poly_groups;
  std::vector<residual_group> residual_groups;
  std::vector<custom_constraint_block> custom_blocks;

  bool empty() const {
    return poly_groups.empty() && residual_groups.empty() && custom_blocks.empty();
  }
};

struct custom_objective_term {
  // Returns the value; accumulates gradients into the two blocks.
  std::function<double(std::span<const double>, std::span<const double>, std::span<double>,
                       std::span<double>)>
      eval_grad;
};

// Everything node i knows: its private data D_i, the replicated shared
// data D^s, its predictors, its hard constraint systems and its soft
// losses. Immutable after construction.
struct node_problem {
  int node_id = 0;
  int node_count = 1;  // N, weights the shared soft loss on D^s

  std::optional<mlp_spec> private_spec;  // p_i
  std::optional<mlp_spec> shared_spec;   // s
  int raw_private_dim = 0;               // parameter blocks without predictors
  int raw_shared_dim = 0;

  std::vector<std::string> private_output_names;
  std::vector<std::string> shared_output_names;

  dataset private_data;  // D_i
  dataset shared_data;   // D^s

  constraint_system private_eq{constraint_kind::equality};
  constraint_system private_ineq{constraint_kind::inequality};
  constraint_system shared_eq{constraint_kind::equality};
  constraint_system shared_ineq{constraint_kind::inequality};

  double weight_decay = 0.0;
  std::vector<custom_objective_term> custom_objective;

  // Explicit start point; when empty the runner seeds MLP parameters.
  std::vector<double> init_private;
  std::vector<double> init_shared;

  int private_dim() const { return private_spec ? private_spec->param_count() : raw_private_dim; }
  int shared_dim() const { return shared_spec ? shared_spec->param_count() : raw_shared_dim; }

  resolved_slot resolve(const std::string& name) const {
    for (std::size_t k = 0; k < private_output_names.size(); ++k)
      if (private_output_names[k] == name) return {false, static_cast<int>(k)};
    for (std::size_t k = 0; k < shared_output_names.size(); ++k)
      if (shared_output_names[k] == name) return {true, static_cast<int>(k)};
    throw missing_activation("predicate '" + name + "' is not a declared predictor output");
  }
};

namespace detail {

inline resolved_row resolve_row(const node_problem& np, const poly_row& row, bool& needs_priv,
                                bool& needs_shared) {
  auto res = [&](const std::string& name) {
    resolved_slot s = np.resolve(name);
    (s.shared ? needs_shared : needs_priv) = true;
    return s;
  };
  if (const auto* pr = std::get_if<product_row>(&row)) {
    resolved_product out;
    for (const auto& n : pr->on) out.on.push_back(res(n));
    for (const auto& n : pr->off) out.off.push_back(res(n));
    return out;
  }
  const auto& ar = std::get<affine_row>(row);
  resolved_affine out;
  out.constant = ar.constant;
  for (const auto& prod : ar.products) {
    std::vector<resolved_slot> slots;
    for (const auto& n : prod) slots.push_back(res(n));
    out.products.push_back(std::move(slots));
  }
  return out;
}

}  // namespace detail

inline void add_poly_constraint(const node_problem& np, constraint_system& sys,
                                poly_constraint pc,
                                sample_binding binding = sample_binding::all) {
  poly_group g;
  g.binding = binding;
  for (const auto& row : pc.rows)
    g.resolved.push_back(detail::resolve_row(np, row, g.needs_private, g.needs_shared));
  g.pc = std::move(pc);
  sys.poly_groups.push_back(std::move(g));
}

inline void add_formula_constraint(const node_problem& np, constraint_system& sys,
                                   const formula& f) {
  for (auto& pc : compile_formula(f)) add_poly_constraint(np, sys, std::move(pc));
}

inline void add_residual_constraint(const node_problem& np, constraint_system& sys,
                                    const std::string& predicate) {
  sys.residual_groups.push_back({predicate, np.resolve(predicate)});
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

template <class Fn>
void for_each_bound_sample(const node_problem& np, sample_binding b, Fn&& fn) {
  for (const auto& s : np.private_data.samples)
    if (b == sample_binding::all || s.supervised()) fn(s);
  for (const auto& s : np.shared_data.samples)
    if (b == sample_binding::all || s.supervised()) fn(s);
}

inline int bound_sample_count(const node_problem& np, sample_binding b) {
  int n = 0;
  for_each_bound_sample(np, b, [&n](const data_sample&) { ++n; });
  return n;
}

// Total scalar row count m; fixes the multiplier vector layout.
inline int multiplicity(const node_problem& np, const constraint_system& sys) {
  int m = 0;
  for (const auto& g : sys.poly_groups) m += g.pc.arity() * bound_sample_count(np, g.binding);
  for (const auto& rg : sys.residual_groups) {
    for_each_bound_sample(np, sample_binding::supervised, [&](const data_sample& s) {
      if (s.labels.count(rg.predicate)) ++m;
    });
  }
  for (const auto& cb : sys.custom_blocks) m += cb.rows;
  return m;
}

namespace detail {

struct eval_workspace {
  std::vector<std::vector<double>> scratch;
  std::vector<double> priv_act, shared_act;
  std::vector<double> up_priv, up_shared;
};

inline void sample_activations(const node_problem& np, std::span<const double> wp,
                               std::span<const double> ws, const data_sample& s, bool need_priv,
                               bool need_shared, eval_workspace& w) {
  if (need_priv) {
    if (!np.private_spec) throw invalid_config("constraint references a private predictor but none is declared");
    mlp_forward_cached(*np.private_spec, wp, s.x, w.scratch);
    w.priv_act = w.scratch.back();
  }
  if (need_shared) {
    if (!np.shared_spec) throw invalid_config("constraint references a shared predictor but none is declared");
    mlp_forward_cached(*np.shared_spec, ws, s.x, w.scratch);
    w.shared_act = w.scratch.back();
  }
}

inline auto slot_lookup(const eval_workspace& w) {
  return [&w](const resolved_slot& s) -> double {
    return s.shared ? w.shared_act[s.index] : w.priv_act[s.index];
  };
}

template <class Lookup>
double resolved_row_value(const resolved_row& row, Lookup&& act) {
  if (const auto* pr = std::get_if<resolved_product>(&row)) {
    double p = 1.0;
    for (const auto& s : pr->on) p *= act(s);
    if (pr->off.empty()) return p;
    double q = 1.0;
    for (const auto& s : pr->off) q *= act(s);
    return p * (1.0 - q);
  }
  const auto& ar = std::get<resolved_affine>(row);
  double v = ar.constant;
  for (const auto& prod : ar.products) {
    double p = 1.0;
    for (const auto& s : prod) p *= act(s);
    v += p;
  }
  return v;
}

// cot * d(row)/d(activation), accumulated per slot.
template <class Lookup, class Sink>
void resolved_row_backward(const resolved_row& row, Lookup&& act, double cot, Sink&& sink) {
  if (cot == 0.0) return;
  if (const auto* pr = std::get_if<resolved_product>(&row)) {
    double p = 1.0;
    for (const auto& s : pr->on) p *= act(s);
    double q = 1.0;
    for (const auto& s : pr->off) q *= act(s);
    const double tail = pr->off.empty() ? 1.0 : 1.0 - q;
    for (std::size_t k = 0; k < pr->on.size(); ++k) {
      double others = 1.0;
      for (std::size_t i = 0; i < pr->on.size(); ++i)
        if (i != k) others *= act(pr->on[i]);
      sink(pr->on[k], cot * others * tail);
    }
    for (std::size_t k = 0; k < pr->off.size(); ++k) {
      double others = 1.0;
      for (std::size_t i = 0; i < pr->off.size(); ++i)
        if (i != k) others *= act(pr->off[i]);
      sink(pr->off[k], cot * p * -others);
    }
    return;
  }
  const auto& ar = std::get<resolved_affine>(row);
  for (const auto& prod : ar.products)
    for (std::size_t k = 0; k < prod.size(); ++k) {
      double others = 1.0;
      for (std::size_t i = 0; i < prod.size(); ++i)
        if (i != k) others *= act(prod[i]);
      sink(prod[k], cot * others);
    }
}

}  // namespace detail

// Stacked constraint values over all bound samples, fixed order.
inline std::vector<double> eval_constraints(const node_problem& np, const constraint_system& sys,
                                            std::span<const double> wp,
                                            std::span<const double> ws) {
  if (static_cast<int>(wp.size()) != np.private_dim() ||
      static_cast<int>(ws.size()) != np.shared_dim())
    throw dimension_mismatch("eval_constraints: parameter block size mismatch");
  std::vector<double> out;
  out.reserve(multiplicity(np, sys));
  detail::eval_workspace w;
  auto act = detail::slot_lookup(w);
  for (const auto& g : sys.poly_groups) {
    for_each_bound_sample(np, g.binding, [&](const data_sample& s) {
      detail::sample_activations(np, wp, ws, s, g.needs_private, g.needs_shared, w);
      for (const auto& row : g.resolved) out.push_back(detail::resolved_row_value(row, act));
    });
  }
  for (const auto& rg : sys.residual_groups) {
    for_each_bound_sample(np, sample_binding::supervised, [&](const data_sample& s) {
      auto it = s.labels.find(rg.predicate);
      if (it == s.labels.end()) return;
      detail::sample_activations(np, wp, ws, s, !rg.slot.shared, rg.slot.shared, w);
      out.push_back(act(rg.slot) - it->second);
    });
  }
  for (const auto& cb : sys.custom_blocks) {
    const std::size_t base = out.size();
    out.resize(base + cb.rows, 0.0);
    cb.eval(wp, ws, std::span<double>(out).subspan(base, cb.rows));
  }
  return out;
}

// Exact Jacobian-transpose-vector product; accumulates into grad_p/grad_s.
inline void constraints_jtvp(const node_problem& np, const constraint_system& sys,
                             std::span<const double> wp, std::span<const double> ws,
                             std::span<const double> cot, std::span<double> grad_p,
                             std::span<double> grad_s) {
  if (static_cast<int>(cot.size()) != multiplicity(np, sys))
    throw dimension_mismatch("constraints_jtvp: cotangent size != multiplicity");
  detail::eval_workspace w;
  auto act = detail::slot_lookup(w);
  std::size_t idx = 0;
  auto backprop_sample = [&](const data_sample& s, bool need_priv, bool need_shared) {
    if (need_priv) {
      bool nonzero = false;
      for (double u : w.up_priv) nonzero |= (u != 0.0);
      if (nonzero) {
        detail::mlp_forward_cached(*np.private_spec, wp, s.x, w.scratch);
        detail::mlp_backward(*np.private_spec, wp, w.scratch, w.up_priv, grad_p, {});
      }
    }
    if (need_shared) {
      bool nonzero = false;
      for (double u : w.up_shared) nonzero |= (u != 0.0);
      if (nonzero) {
        detail::mlp_forward_cached(*np.shared_spec, ws, s.x, w.scratch);
        detail::mlp_backward(*np.shared_spec, ws, w.scratch, w.up_shared, grad_s, {});
      }
    }
  };
  auto sink = [&w](const resolved_slot& s, double g) {
    (s.shared ? w.up_shared : w.up_priv)[s.index] += g;
  };
  for (const auto& g : sys.poly_groups) {
    for_each_bound_sample(np, g.binding, [&](const data_sample& s) {
      detail::sample_activations(np, wp, ws, s, g.needs_private, g.needs_shared, w);
      if (g.needs_private) w.up_priv.assign(np.private_spec->output_size(), 0.0);
      if (g.needs_shared) w.up_shared.assign(np.shared_spec->output_size(), 0.0);
      for (const auto& row : g.resolved) detail::resolved_row_backward(row, act, cot[idx++], sink);
      backprop_sample(s, g.needs_private, g.needs_shared);
    });
  }
  for (const auto& rg : sys.residual_groups) {
    for_each_bound_sample(np, sample_binding::supervised, [&](const data_sample& s) {
      if (!s.labels.count(rg.predicate)) return;
      const double c = cot[idx++];
      if (c == 0.0) return;
      if (rg.slot.shared) {
        w.up_shared.assign(np.shared_spec->output_size(), 0.0);
        w.up_shared[rg.slot.index] = c;
      } else {
        w.up_priv.assign(np.private_spec->output_size(), 0.0);
        w.up_priv[rg.slot.index] = c;
      }
      backprop_sample(s, !rg.slot.shared, rg.slot.shared);
    });
  }
  for (const auto& cb : sys.custom_blocks) {
    cb.jtvp(wp, ws, cot.subspan(idx, cb.rows), grad_p, grad_s);
    idx += cb.rows;
  }
}

// ---------------------------------------------------------------------------
// Soft objective: psi_i over the labeled part of D_i u D^s, plus the
// replicated shared soft loss (1/N) psi^s(.|D^s) + psi^s(.|D_i), plus
// weight decay over both owned parameter blocks.
// ---------------------------------------------------------------------------

struct objective_eval {
  double value = 0.0;
  std::vector<double> grad_priv;
  std::vector<double> grad_shared;
};

inline double objective_value(const node_problem& np, std::span<const double> wp,
                              std::span<const double> ws) {
  if (static_cast<int>(wp.size()) != np.private_dim() ||
      static_cast<int>(ws.size()) != np.shared_dim())
    throw dimension_mismatch("objective: parameter block size mismatch");
  double value = 0.0;
  detail::eval_workspace w;
  auto fit_sample = [&](const data_sample& s, double shared_term_weight) {
    if (s.labels.empty() && s.shared_labels.empty()) return;
    bool need_priv = false, need_shared = false;
    for (const auto& [name, y] : s.labels) {
      auto slot = np.resolve(name);
      (slot.shared ? need_shared : need_priv) = true;
    }
    need_shared |= !s.shared_labels.empty();
    detail::sample_activations(np, wp, ws, s, need_priv, need_shared, w);
    for (const auto& [name, y] : s.labels) {
      auto slot = np.resolve(name);
      const double a = slot.shared ? w.shared_act[slot.index] : w.priv_act[slot.index];
      value += (a - y) * (a - y);
    }
    for (const auto& [name, y] : s.shared_labels) {
      auto slot = np.resolve(name);
      const double a = w.shared_act[slot.index];
      value += shared_term_weight * (a - y) * (a - y);
    }
  };
  for (const auto& s : np.private_data.samples) fit_sample(s, 1.0);
  for (const auto& s : np.shared_data.samples) fit_sample(s, 1.0 / np.node_count);

  std::vector<double> gp(np.private_dim(), 0.0), gs(np.shared_dim(), 0.0);
  for (const auto& term : np.custom_objective) value += term.eval_grad(wp, ws, gp, gs);

  if (np.weight_decay > 0.0) {
    double sq = 0.0;
    for (double v : wp) sq += v * v;
    for (double v : ws) sq += v * v;
    value += 0.5 * np.weight_decay * sq;
  }
  return value;
}

inline objective_eval objective_value_and_grad(const node_problem& np, std::span<const double> wp,
                                               std::span<const double> ws) {
  if (static_cast<int>(wp.size()) != np.private_dim() ||
      static_cast<int>(ws.size()) != np.shared_dim())
    throw dimension_mismatch("objective: parameter block size mismatch");
  objective_eval out;
  out.grad_priv.assign(np.private_dim(), 0.0);
  out.grad_shared.assign(np.shared_dim(), 0.0);

  detail::eval_workspace w;
  auto fit_sample = [&](const data_sample& s, double shared_term_weight) {
    if (s.labels.empty() && s.shared_labels.empty()) return;
    bool need_priv = false, need_shared = false;
    for (const auto& [name, y] : s.labels) {
      auto slot = np.resolve(name);
      (slot.shared ? need_shared : need_priv) = true;
    }
    need_shared |= !s.shared_labels.empty();
    detail::sample_activations(np, wp, ws, s, need_priv, need_shared, w);
    if (need_priv) w.up_priv.assign(np.private_spec->output_size(), 0.0);
    if (need_shared) w.up_shared.assign(np.shared_spec->output_size(), 0.0);
    for (const auto& [name, y] : s.labels) {
      auto slot = np.resolve(name);
      const double a = slot.shared ? w.shared_act[slot.index] : w.priv_act[slot.index];
      out.value += (a - y) * (a - y);
      (slot.shared ? w.up_shared : w.up_priv)[slot.index] += 2.0 * (a - y);
    }
    for (const auto& [name, y] : s.shared_labels) {
      auto slot = np.resolve(name);
      if (!slot.shared) throw invalid_config("shared label on a private predictor output");
      const double a = w.shared_act[slot.index];
      out.value += shared_term_weight * (a - y) * (a - y);
      w.up_shared[slot.index] += shared_term_weight * 2.0 * (a - y);
    }
    if (need_priv) {
      detail::mlp_forward_cached(*np.private_spec, wp, s.x, w.scratch);
      detail::mlp_backward(*np.private_spec, wp, w.scratch, w.up_priv, out.grad_priv, {});
    }
    if (need_shared) {
      detail::mlp_forward_cached(*np.shared_spec, ws, s.x, w.scratch);
      detail::mlp_backward(*np.shared_spec, ws, w.scratch, w.up_shared, out.grad_shared, {});
    }
  };
  for (const auto& s : np.private_data.samples) fit_sample(s, 1.0);
  for (const auto& s : np.shared_data.samples) fit_sample(s, 1.0 / np.node_count);

  for (const auto& term : np.custom_objective)
    out.value += term.eval_grad(wp, ws, out.grad_priv, out.grad_shared);

  if (np.weight_decay > 0.0) {
    double sq = 0.0;
    for (std::size_t k = 0; k < wp.size(); ++k) {
      sq += wp[k] * wp[k];
      out.grad_priv[k] += np.weight_decay * wp[k];
    }
    for (std::size_t k = 0; k < ws.size(); ++k) {
      sq += ws[k] * ws[k];
      out.grad_shared[k] += np.weight_decay * ws[k];
    }
    out.value += 0.5 * np.weight_decay * sq;
  }
  return out;
}

}  // namespace asymm
