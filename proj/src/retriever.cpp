#include "gpool/retriever.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <set>

namespace gpool {
namespace {

struct Arc {
  std::size_t to;
  std::size_t edge;
};

std::vector<std::vector<Arc>> undirected_arcs(const AttributedGraph& g) {
  std::vector<std::vector<Arc>> adj(g.node_count());
  for (std::size_t e = 0; e < g.edges().size(); ++e) {
    const Edge& edge = g.edges()[e];
    if (edge.src == edge.dst) continue;
    adj[edge.src].push_back({edge.dst, e});
    adj[edge.dst].push_back({edge.src, e});
  }
  return adj;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct Tree {
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> edges;
};

// Best connected subtree of `tree` by prize minus edge cost.
Tree strong_prune(const Tree& tree, const PrizedGraph& pg) {
  const auto& edges = pg.base.edges();
  const std::size_t n = pg.base.node_count();
  std::vector<std::vector<Arc>> adj(n);
  for (std::size_t e : tree.edges) {
    adj[edges[e].src].push_back({edges[e].dst, e});
    adj[edges[e].dst].push_back({edges[e].src, e});
  }
  // Iterative DFS order from the first node.
  const std::size_t root = tree.nodes.front();
  std::vector<std::size_t> order, parent_edge(n, SIZE_MAX), parent(n, SIZE_MAX);
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{root};
  seen[root] = true;
  while (!stack.empty()) {
    const std::size_t v = stack.back();
    stack.pop_back();
    order.push_back(v);
    for (const Arc& a : adj[v]) {
      if (seen[a.to]) continue;
      seen[a.to] = true;
      parent[a.to] = v;
      parent_edge[a.to] = a.edge;
      stack.push_back(a.to);
    }
  }
  std::vector<double> net(n, 0.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const std::size_t v = *it;
    net[v] += pg.prizes[v];
    if (parent[v] != SIZE_MAX) {
      const double contribution = net[v] - pg.edge_costs[parent_edge[v]];
      if (contribution > 0.0) net[parent[v]] += contribution;
    }
  }
  std::size_t top = root;
  for (std::size_t v : order) {
    if (net[v] > net[top] || (net[v] == net[top] && v < top)) top = v;
  }
  Tree best;
  std::vector<std::size_t> frontier{top};
  while (!frontier.empty()) {
    const std::size_t v = frontier.back();
    frontier.pop_back();
    best.nodes.push_back(v);
    for (const Arc& a : adj[v]) {
      if (parent[a.to] != v) continue;
      if (net[a.to] - pg.edge_costs[a.edge] > 0.0) {
        best.edges.push_back(a.edge);
        frontier.push_back(a.to);
      }
    }
  }
  std::sort(best.nodes.begin(), best.nodes.end());
  std::sort(best.edges.begin(), best.edges.end());
  return best;
}

Tree grow_from(std::size_t root, const PrizedGraph& pg, const std::vector<std::vector<Arc>>& adj) {
  const std::size_t n = pg.base.node_count();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<bool> in_tree(n, false);
  in_tree[root] = true;
  Tree tree{{root}, {}};

  while (true) {
    std::vector<double> dist(n, inf);
    std::vector<std::size_t> via(n, SIZE_MAX), from(n, SIZE_MAX);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    for (std::size_t v : tree.nodes) {
      dist[v] = 0.0;
      heap.emplace(0.0, v);
    }
    while (!heap.empty()) {
      auto [d, v] = heap.top();
      heap.pop();
      if (d > dist[v]) continue;
      for (const Arc& a : adj[v]) {
        const double nd = d + pg.edge_costs[a.edge];
        if (nd < dist[a.to]) {
          dist[a.to] = nd;
          via[a.to] = a.edge;
          from[a.to] = v;
          heap.emplace(nd, a.to);
        }
      }
    }
    double best_gain = 0.0;
    std::size_t target = SIZE_MAX;
    for (std::size_t v = 0; v < n; ++v) {
      if (in_tree[v] || dist[v] == inf) continue;
      double collected = 0.0;
      for (std::size_t u = v; !in_tree[u]; u = from[u]) collected += pg.prizes[u];
      const double gain = collected - dist[v];
      if (gain > best_gain + 1e-12) {
        best_gain = gain;
        target = v;
      }
    }
    if (target == SIZE_MAX) break;
    for (std::size_t u = target; !in_tree[u]; u = from[u]) {
      in_tree[u] = true;
      tree.nodes.push_back(u);
      tree.edges.push_back(via[u]);
    }
  }
  return tree;
}

double tree_objective(const Tree& t, const PrizedGraph& pg) {
  double obj = 0.0;
  for (std::size_t v : t.nodes) obj += pg.prizes[v];
  for (std::size_t e : t.edges) obj -= pg.edge_costs[e];
  return obj;
}

// Minimum spanning tree weight of the subgraph induced by `mask`, or +inf
// when the induced subgraph is disconnected.
double induced_mst(unsigned mask, const PrizedGraph& pg) {
  const std::size_t n = pg.base.node_count();
  std::vector<std::pair<double, std::size_t>> candidates;
  for (std::size_t e = 0; e < pg.base.edges().size(); ++e) {
    const Edge& edge = pg.base.edges()[e];
    if (edge.src != edge.dst && (mask >> edge.src & 1u) && (mask >> edge.dst & 1u)) {
      candidates.emplace_back(pg.edge_costs[e], e);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::size_t> root(n);
  std::iota(root.begin(), root.end(), std::size_t{0});
  auto find = [&](std::size_t v) {
    while (root[v] != v) v = root[v] = root[root[v]];
    return v;
  };
  const auto members = static_cast<std::size_t>(std::popcount(mask));
  std::size_t joined = 0;
  double weight = 0.0;
  for (auto [cost, e] : candidates) {
    const std::size_t a = find(pg.base.edges()[e].src);
    const std::size_t b = find(pg.base.edges()[e].dst);
    if (a == b) continue;
    root[a] = b;
    weight += cost;
    ++joined;
  }
  return joined + 1 == members ? weight : std::numeric_limits<double>::infinity();
}

}  // namespace

void PrizedGraph::validate() const {
  if (prizes.size() != base.node_count()) throw InvalidArgument("prize count does not match node count");
  if (edge_costs.size() != base.edges().size()) throw InvalidArgument("edge cost count does not match edge count");
  for (double p : prizes) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidArgument("prizes must be finite and nonnegative");
  }
  for (double c : edge_costs) {
    if (!(c > 0.0) || !std::isfinite(c)) throw InvalidArgument("edge costs must be finite and positive");
  }
}

PrizedGraph assign_prizes(const AttributedGraph& g, std::span<const double> query, std::size_t top_n,
                          double edge_cost) {
  if (query.size() != g.feature_dim()) {
    throw DimensionError("query width " + std::to_string(query.size()) + " != feature width " +
                         std::to_string(g.feature_dim()));
  }
  const std::size_t n = g.node_count();
  std::vector<double> sim(n);
  for (std::size_t i = 0; i < n; ++i) sim[i] = cosine(query, g.features().row(i));
  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });

  PrizedGraph pg{g, std::vector<double>(n, 0.0), std::vector<double>(g.edges().size(), edge_cost)};
  for (std::size_t r = 0; r < std::min(top_n, n); ++r) pg.prizes[rank[r]] = static_cast<double>(top_n - r);
  pg.validate();
  return pg;
}

Subgraph extract_subgraph(const AttributedGraph& g, std::vector<std::size_t> nodes, std::vector<std::size_t> edges) {
  std::sort(nodes.begin(), nodes.end());
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(nodes.begin(), nodes.end()) != nodes.end()) throw InvalidArgument("duplicate subgraph node");
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end()) throw InvalidArgument("duplicate subgraph edge");
  std::vector<std::size_t> local(g.node_count(), SIZE_MAX);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] >= g.node_count()) throw InvalidArgument("subgraph node " + std::to_string(nodes[i]) + " not in base graph");
    local[nodes[i]] = i;
  }
  Matrix x(nodes.size(), g.feature_dim());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::copy(g.features().row(nodes[i]).begin(), g.features().row(nodes[i]).end(), x.row(i).begin());
  }
  std::vector<Edge> out_edges;
  for (std::size_t e : edges) {
    if (e >= g.edges().size()) throw InvalidArgument("subgraph edge " + std::to_string(e) + " not in base graph");
    Edge edge = g.edges()[e];
    if (local[edge.src] == SIZE_MAX || local[edge.dst] == SIZE_MAX) {
      throw InvalidArgument("subgraph edge " + std::to_string(e) + " has an endpoint outside the subgraph");
    }
    edge.src = local[edge.src];
    edge.dst = local[edge.dst];
    out_edges.push_back(std::move(edge));
  }
  std::optional<std::vector<std::string>> labels;
  if (g.labels()) {
    labels.emplace();
    for (std::size_t v : nodes) labels->push_back((*g.labels())[v]);
  }
  AttributedGraph sub(std::move(x), std::move(out_edges), std::move(labels), g.undirected());
  return {std::move(nodes), std::move(edges), std::move(sub)};
}

Subgraph solve_pcst(const PrizedGraph& pg) {
  pg.validate();
  const auto adj = undirected_arcs(pg.base);
  Tree best;
  double best_obj = 0.0;
  for (std::size_t root = 0; root < pg.base.node_count(); ++root) {
    if (!(pg.prizes[root] > 0.0)) continue;
    Tree pruned = strong_prune(grow_from(root, pg, adj), pg);
    const double obj = tree_objective(pruned, pg);
    if (obj > best_obj) {
      best_obj = obj;
      best = std::move(pruned);
    }
  }
  return extract_subgraph(pg.base, std::move(best.nodes), std::move(best.edges));
}

double pcst_objective(const Subgraph& sub, const PrizedGraph& pg) {
  pg.validate();
  std::set<std::size_t> nodes;
  double obj = 0.0;
  for (std::size_t v : sub.nodes) {
    if (v >= pg.base.node_count() || !nodes.insert(v).second) {
      throw InvalidArgument("subgraph node " + std::to_string(v) + " is not a distinct base node");
    }
    obj += pg.prizes[v];
  }
  std::set<std::size_t> seen_edges;
  for (std::size_t e : sub.edges) {
    if (e >= pg.base.edges().size() || !seen_edges.insert(e).second) {
      throw InvalidArgument("subgraph edge " + std::to_string(e) + " is not a distinct base edge");
    }
    const Edge& edge = pg.base.edges()[e];
    if (!nodes.contains(edge.src) || !nodes.contains(edge.dst)) {
      throw InvalidArgument("subgraph edge " + std::to_string(e) + " leaves the subgraph");
    }
    obj -= pg.edge_costs[e];
  }
  return obj;
}

PcstOptimum exact_pcst_oracle(const PrizedGraph& pg) {
  pg.validate();
  const std::size_t n = pg.base.node_count();
  if (n > kOracleMaxNodes) {
    throw InvalidArgument("exact PCST oracle refuses " + std::to_string(n) + " nodes (limit " +
                          std::to_string(kOracleMaxNodes) + ")");
  }
  PcstOptimum best;
  unsigned best_mask = 0;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    double prize = 0.0;
    for (std::size_t v = 0; v < n; ++v)
      if (mask >> v & 1u) prize += pg.prizes[v];
    if (prize <= best.objective) continue;  // costs only subtract
    const double mst = induced_mst(mask, pg);
    if (std::isinf(mst)) continue;
    if (prize - mst > best.objective) {
      best.objective = prize - mst;
      best_mask = mask;
    }
  }
  for (std::size_t v = 0; v < n; ++v)
    if (best_mask >> v & 1u) best.nodes.push_back(v);
  return best;
}

}  // namespace gpool
