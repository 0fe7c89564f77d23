#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "asymm/errors.hpp"
#include "asymm/rng.hpp"

namespace asymm {

// Undirected connected communication graph. Adjacency lists are kept
// sorted so every iteration order downstream is deterministic.
struct graph {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;     // normalized (i < j), sorted
  std::vector<std::vector<int>> adjacency;    // per-node sorted neighbor list
  int diameter = 0;

  int degree(int i) const { return static_cast<int>(adjacency[i].size()); }
  const std::vector<int>& neighbors(int i) const { return adjacency[i]; }
  bool has_edge(int i, int j) const {
    const auto& a = adjacency[i];
    return std::binary_search(a.begin(), a.end(), j);
  }
};

namespace detail {

inline std::vector<int> bfs_distances(const std::vector<std::vector<int>>& adj, int src) {
  std::vector<int> dist(adj.size(), -1);
  std::deque<int> q;
  dist[src] = 0;
  q.push_back(src);
  while (!q.empty()) {
    int u = q.front();
    q.pop_front();
    for (int v : adj[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push_back(v);
      }
    }
  }
  return dist;
}

}  // namespace detail

// Max BFS eccentricity. A single isolated node gets diameter 1 so that
// the logic-AND matrix keeps at least one row.
inline int compute_diameter(const std::vector<std::vector<int>>& adj) {
  int diam = 0;
  for (std::size_t s = 0; s < adj.size(); ++s) {
    auto dist = detail::bfs_distances(adj, static_cast<int>(s));
    for (int d : dist) {
      if (d < 0) throw disconnected_graph("graph is not connected");
      diam = std::max(diam, d);
    }
  }
  return std::max(diam, 1);
}

inline int diameter(const graph& g) { return g.diameter; }

inline graph build_graph(int node_count, const std::vector<std::pair<int, int>>& edges) {
  if (node_count < 1) throw invalid_config("node_count must be >= 1");
  std::set<std::pair<int, int>> normalized;
  for (auto [a, b] : edges) {
    if (a == b) throw invalid_edge("self-loop at node " + std::to_string(a));
    if (a < 0 || b < 0 || a >= node_count || b >= node_count)
      throw invalid_edge("edge endpoint out of range: (" + std::to_string(a) + "," +
                         std::to_string(b) + ")");
    normalized.insert({std::min(a, b), std::max(a, b)});
  }
  graph g;
  g.node_count = node_count;
  g.edges.assign(normalized.begin(), normalized.end());
  g.adjacency.assign(node_count, {});
  for (auto [a, b] : g.edges) {
    g.adjacency[a].push_back(b);
    g.adjacency[b].push_back(a);
  }
  for (auto& nbrs : g.adjacency) std::sort(nbrs.begin(), nbrs.end());
  g.diameter = compute_diameter(g.adjacency);  // throws if disconnected
  return g;
}

inline graph make_path(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i + 1 < n; ++i) e.push_back({i, i + 1});
  return build_graph(n, e);
}

inline graph make_ring(int n) {
  if (n == 1) return build_graph(1, {});
  if (n == 2) return build_graph(2, {{0, 1}});
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i) e.push_back({i, (i + 1) % n});
  return build_graph(n, e);
}

inline graph make_complete(int n) {
  std::vector<std::pair<int, int>> e;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) e.push_back({i, j});
  return build_graph(n, e);
}

// Erdos-Renyi G(n, p), resampled until connected.
inline graph make_random_connected(int n, double p, std::uint64_t seed) {
  rng r(rng::sub_seed(seed, 0xC0FFEE));
  for (;;) {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (r.next_unit() < p) e.push_back({i, j});
    try {
      return build_graph(n, e);
    } catch (const disconnected_graph&) {
      continue;
    }
  }
}

// Plain-text graph file: header "N <count>", then one "i j" pair per line.
inline graph parse_graph_text(std::istream& in) {
  std::string tok;
  if (!(in >> tok) || tok != "N") throw parse_error("graph file: expected header 'N <count>'");
  int n = 0;
  if (!(in >> n)) throw parse_error("graph file: bad node count");
  std::vector<std::pair<int, int>> edges;
  int a, b;
  while (in >> a >> b) edges.push_back({a, b});
  return build_graph(n, edges);
}

inline graph load_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open graph file: " + path);
  return parse_graph_text(in);
}

inline void save_graph_file(const graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw error("cannot write graph file: " + path);
  out << "N " << g.node_count << "\n";
  for (auto [a, b] : g.edges) out << a << " " << b << "\n";
}

// Deterministic asynchronous awakening scheduler: a fresh random
// permutation of all nodes per round, rounds concatenated. Exactly one
// node is awake per event and any window of 2N-1 events contains every
// node at least once.
class schedule {
 public:
  schedule(int node_count, std::uint64_t seed)
      : n_(node_count), seed_(seed), rng_(rng::sub_seed(seed, 0x5EED)) {
    if (node_count < 1) throw invalid_config("schedule needs at least one node");
  }

  int node_count() const { return n_; }
  std::uint64_t seed() const { return seed_; }
  int max_gap() const { return 2 * n_ - 1; }

  int next_awakening() {
    if (pos_ >= round_.size()) {
      round_.resize(n_);
      std::iota(round_.begin(), round_.end(), 0);
      rng_.shuffle(round_);
      pos_ = 0;
    }
    int node = round_[pos_++];
    trace_.push_back(node);
    return node;
  }

  const std::vector<int>& trace() const { return trace_; }

 private:
  int n_;
  std::uint64_t seed_;
  rng rng_;
  std::vector<int> round_;
  std::size_t pos_ = 0;
  std::vector<int> trace_;
};

}  // namespace asymm
