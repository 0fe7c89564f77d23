#pragma once

#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "asymm/errors.hpp"

namespace asymm {

// First-order-logic formula over predicate symbols, implicitly
// universally quantified over a dataset.
struct formula {
  enum class op { predicate, negation, conjunction, implication, exclusive_or };

  op kind = op::predicate;
  std::string name;                 // predicate leaves only
  std::vector<formula> children;

  static formula pred(std::string n) {
    formula f;
    f.kind = op::predicate;
    f.name = std::move(n);
    return f;
  }
  static formula lnot(formula a) {
    formula f;
    f.kind = op::negation;
    f.children = {std::move(a)};
    return f;
  }
  static formula land(std::vector<formula> parts) {
    formula f;
    f.kind = op::conjunction;
    f.children = std::move(parts);
    return f;
  }
  static formula implies(formula a, formula b) {
    formula f;
    f.kind = op::implication;
    f.children = {std::move(a), std::move(b)};
    return f;
  }
  static formula lxor(formula a, formula b) {
    formula f;
    f.kind = op::exclusive_or;
    f.children = {std::move(a), std::move(b)};
    return f;
  }

  std::string text() const {
    switch (kind) {
      case op::predicate:
        return name;
      case op::negation:
        return "not " + children[0].paren();
      case op::conjunction: {
        std::string s = "and";
        for (const auto& c : children) s += " " + c.paren();
        return s;
      }
      case op::implication:
        return "implies " + children[0].paren() + " " + children[1].paren();
      case op::exclusive_or:
        return "xor " + children[0].paren() + " " + children[1].paren();
    }
    return {};
  }

  std::string paren() const {
    return kind == op::predicate ? name : "(" + text() + ")";
  }

  void collect_predicates(std::set<std::string>& out) const {
    if (kind == op::predicate)
      out.insert(name);
    else
      for (const auto& c : children) c.collect_predicates(out);
  }
};

// ---------------------------------------------------------------------------
// Prefix parser:  expr := IDENT | '(' OP expr... ')'
// The top-level formula may omit the outer parentheses, e.g.
//   implies (and running shoes) clothing
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> tokenize_formula(const std::string& text) {
  std::vector<std::string> toks;
  std::string cur;
  for (char ch : text) {
    if (ch == '(' || ch == ')') {
      if (!cur.empty()) toks.push_back(std::exchange(cur, {}));
      toks.push_back(std::string(1, ch));
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) toks.push_back(std::exchange(cur, {}));
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) toks.push_back(cur);
  return toks;
}

inline bool is_operator_name(const std::string& t) {
  return t == "and" || t == "not" || t == "implies" || t == "xor";
}

struct formula_parser {
  const std::vector<std::string>& toks;
  std::size_t pos = 0;

  const std::string& peek() const {
    if (pos >= toks.size()) throw parse_error("formula: unexpected end of input");
    return toks[pos];
  }
  std::string take() {
    std::string t = peek();
    ++pos;
    return t;
  }

  formula parse_expr() {
    const std::string t = take();
    if (t == "(") {
      formula f = parse_operator_form();
      if (take() != ")") throw parse_error("formula: expected ')'");
      return f;
    }
    if (t == ")") throw parse_error("formula: unexpected ')'");
    if (is_operator_name(t)) throw parse_error("formula: operator '" + t + "' needs parentheses");
    return formula::pred(t);
  }

  formula parse_operator_form() {
    const std::string op = take();
    if (op == "not") return formula::lnot(parse_expr());
    if (op == "and") {
      std::vector<formula> parts;
      while (pos < toks.size() && peek() != ")") parts.push_back(parse_expr());
      if (parts.size() < 2) throw parse_error("formula: 'and' needs at least two operands");
      return formula::land(std::move(parts));
    }
    if (op == "implies") {
      formula a = parse_expr();
      formula b = parse_expr();
      return formula::implies(std::move(a), std::move(b));
    }
    if (op == "xor") {
      formula a = parse_expr();
      formula b = parse_expr();
      return formula::lxor(std::move(a), std::move(b));
    }
    throw parse_error("formula: unknown operator '" + op + "'");
  }
};

}  // namespace detail

inline formula parse_formula(const std::string& text) {
  auto toks = detail::tokenize_formula(text);
  if (toks.empty()) throw parse_error("formula: empty input");
  detail::formula_parser p{toks};
  formula f;
  if (toks[0] == "(") {
    f = p.parse_expr();
  } else if (detail::is_operator_name(toks[0])) {
    f = p.parse_operator_form();
  } else {
    f = p.parse_expr();
  }
  if (p.pos != toks.size()) throw parse_error("formula: trailing tokens after '" + f.text() + "'");
  return f;
}

// ---------------------------------------------------------------------------
// Point-wise polynomial constraints (product T-norm).
//
// Row forms cover every compiled schema:
//   product_row:  prod(on) * (1 - prod(off)),  off empty -> plain product
//   affine_row:   sum of products + constant
// ---------------------------------------------------------------------------

enum class constraint_kind { equality, inequality };

struct product_row {
  std::vector<std::string> on;
  std::vector<std::string> off;
};

struct affine_row {
  std::vector<std::vector<std::string>> products;
  double constant = 0.0;
};

using poly_row = std::variant<product_row, affine_row>;

struct poly_constraint {
  std::vector<poly_row> rows;
  constraint_kind kind = constraint_kind::equality;
  std::string source;  // formula text, for diagnostics

  int arity() const { return static_cast<int>(rows.size()); }

  std::set<std::string> predicates() const {
    std::set<std::string> out;
    for (const auto& row : rows) {
      if (const auto* pr = std::get_if<product_row>(&row)) {
        out.insert(pr->on.begin(), pr->on.end());
        out.insert(pr->off.begin(), pr->off.end());
      } else {
        const auto& ar = std::get<affine_row>(row);
        for (const auto& p : ar.products) out.insert(p.begin(), p.end());
      }
    }
    return out;
  }
};

namespace detail {

// A schema operand must be a predicate or a conjunction of predicates.
inline std::vector<std::string> conjunct_names(const formula& f) {
  if (f.kind == formula::op::predicate) return {f.name};
  if (f.kind == formula::op::conjunction) {
    std::vector<std::string> names;
    for (const auto& c : f.children) {
      if (c.kind != formula::op::predicate)
        throw unsupported_schema("conjunction operands must be predicates: " + f.text());
      names.push_back(c.name);
    }
    return names;
  }
  throw unsupported_schema("operand must be a predicate or conjunction: " + f.text());
}

}  // namespace detail

// Product T-norm translation of the supported schemas:
//   a => b            ->  a(1-b) = 0
//   not (a and b)     ->  ab = 0
//   (a and b) => c    ->  ab(1-c) = 0
//   a xor b           ->  { a+b-1 = 0,  ab = 0 }
// with a, b, c predicates or conjunctions of predicates. Anything else
// is rejected rather than guessed.
inline std::vector<poly_constraint> compile_formula(const formula& f) {
  poly_constraint pc;
  pc.kind = constraint_kind::equality;
  pc.source = f.text();
  switch (f.kind) {
    case formula::op::implication: {
      product_row row;
      row.on = detail::conjunct_names(f.children[0]);
      row.off = detail::conjunct_names(f.children[1]);
      pc.rows.push_back(std::move(row));
      return {pc};
    }
    case formula::op::negation: {
      const formula& inner = f.children[0];
      if (inner.kind != formula::op::conjunction)
        throw unsupported_schema("only negated conjunctions are supported: " + f.text());
      product_row row;
      row.on = detail::conjunct_names(inner);
      pc.rows.push_back(std::move(row));
      return {pc};
    }
    case formula::op::exclusive_or: {
      auto a = detail::conjunct_names(f.children[0]);
      auto b = detail::conjunct_names(f.children[1]);
      affine_row sum;
      sum.products = {a, b};
      sum.constant = -1.0;
      product_row both;
      both.on = a;
      both.on.insert(both.on.end(), b.begin(), b.end());
      pc.rows.push_back(std::move(sum));
      pc.rows.push_back(std::move(both));
      return {pc};
    }
    default:
      throw unsupported_schema("formula outside the supported schemas: " + f.text());
  }
}

// ---------------------------------------------------------------------------
// Evaluation and exact partial derivatives over a generic activation lookup.
// ---------------------------------------------------------------------------

template <class Lookup>
double evaluate_row(const poly_row& row, Lookup&& act) {
  if (const auto* pr = std::get_if<product_row>(&row)) {
    double p = 1.0;
    for (const auto& n : pr->on) p *= act(n);
    if (pr->off.empty()) return p;
    double q = 1.0;
    for (const auto& n : pr->off) q *= act(n);
    return p * (1.0 - q);
  }
  const auto& ar = std::get<affine_row>(row);
  double s = ar.constant;
  for (const auto& prod : ar.products) {
    double p = 1.0;
    for (const auto& n : prod) p *= act(n);
    s += p;
  }
  return s;
}

// Accumulates cot * d(row)/d(activation) into sink(name, value).
template <class Lookup, class Sink>
void row_backward(const poly_row& row, Lookup&& act, double cot, Sink&& sink) {
  if (cot == 0.0) return;
  if (const auto* pr = std::get_if<product_row>(&row)) {
    double p = 1.0;
    for (const auto& n : pr->on) p *= act(n);
    double q = 1.0;
    for (const auto& n : pr->off) q *= act(n);
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
  const auto& ar = std::get<affine_row>(row);
  for (const auto& prod : ar.products) {
    for (std::size_t k = 0; k < prod.size(); ++k) {
      double others = 1.0;
      for (std::size_t i = 0; i < prod.size(); ++i)
        if (i != k) others *= act(prod[i]);
      sink(prod[k], cot * others);
    }
  }
}

namespace detail {

inline auto map_lookup(const std::map<std::string, double>& acts) {
  return [&acts](const std::string& name) -> double {
    auto it = acts.find(name);
    if (it == acts.end()) throw missing_activation("no activation for predicate '" + name + "'");
    return it->second;
  };
}

}  // namespace detail

inline std::vector<double> evaluate(const poly_constraint& pc,
                                    const std::map<std::string, double>& activations) {
  auto act = detail::map_lookup(activations);
  std::vector<double> out;
  out.reserve(pc.rows.size());
  for (const auto& row : pc.rows) out.push_back(evaluate_row(row, act));
  return out;
}

inline std::map<std::string, double> jacobian_tvp(const poly_constraint& pc,
                                                  const std::map<std::string, double>& activations,
                                                  const std::vector<double>& cotangent) {
  if (cotangent.size() != pc.rows.size())
    throw dimension_mismatch("jacobian_tvp: cotangent size != arity");
  auto act = detail::map_lookup(activations);
  std::map<std::string, double> grad;
  for (const auto& [name, value] : activations) grad[name] = 0.0;
  for (std::size_t r = 0; r < pc.rows.size(); ++r)
    row_backward(pc.rows[r], act, cotangent[r], [&grad](const std::string& n, double g) {
      auto it = grad.find(n);
      if (it == grad.end()) throw missing_activation("no activation for predicate '" + n + "'");
      it->second += g;
    });
  return grad;
}

// Boolean truth value of a formula under a {0,1} assignment.
inline bool formula_truth(const formula& f, const std::map<std::string, bool>& assign) {
  switch (f.kind) {
    case formula::op::predicate: {
      auto it = assign.find(f.name);
      if (it == assign.end()) throw missing_activation("no assignment for '" + f.name + "'");
      return it->second;
    }
    case formula::op::negation:
      return !formula_truth(f.children[0], assign);
    case formula::op::conjunction: {
      for (const auto& c : f.children)
        if (!formula_truth(c, assign)) return false;
      return true;
    }
    case formula::op::implication:
      return !formula_truth(f.children[0], assign) || formula_truth(f.children[1], assign);
    case formula::op::exclusive_or:
      return formula_truth(f.children[0], assign) != formula_truth(f.children[1], assign);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Knowledge-base text format: one formula per line, each line prefixed by
// a visibility tag, either "shared" or "private:<node-id>".
//   private:4 implies (and running shoes) clothing
//   shared xor even odd
// '#' starts a comment.
// ---------------------------------------------------------------------------

struct kb_entry {
  formula f;
  bool shared = false;
  int node_id = -1;  // aware node for private entries
};

inline std::vector<kb_entry> parse_knowledge_base(std::istream& in) {
  std::vector<kb_entry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;  // blank line
    kb_entry e;
    if (tag == "shared") {
      e.shared = true;
    } else if (tag.rfind("private:", 0) == 0) {
      try {
        e.node_id = std::stoi(tag.substr(8));
      } catch (const std::exception&) {
        throw parse_error("kb line " + std::to_string(lineno) + ": bad node id in '" + tag + "'");
      }
    } else {
      throw parse_error("kb line " + std::to_string(lineno) + ": expected 'shared' or 'private:<id>'");
    }
    std::string rest;
    std::getline(ls, rest);
    e.f = parse_formula(rest);
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<kb_entry> parse_knowledge_base(const std::string& text) {
  std::istringstream in(text);
  return parse_knowledge_base(in);
}

inline void save_knowledge_base(const std::vector<kb_entry>& entries, std::ostream& out) {
  for (const auto& e : entries) {
    if (e.shared)
      out << "shared " << e.f.text() << "\n";
    else
      out << "private:" << e.node_id << " " << e.f.text() << "\n";
  }
}

}  // namespace asymm
