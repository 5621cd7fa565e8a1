#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gpool/graph.hpp"

namespace gpool {

/// Graph with nonnegative node prizes and positive per-edge costs.
struct PrizedGraph {
  AttributedGraph base;
  std::vector<double> prizes;
  std::vector<double> edge_costs;

  // Throws InvalidArgument on length mismatch, negative prize or
  // non-positive cost.
  void validate() const;
};

/// A subgraph of a base graph: sorted node ids, sorted edge ids (indices into
/// base.edges()), and the extracted graph with nodes renumbered in the order
/// of `nodes`.
struct Subgraph {
  std::vector<std::size_t> nodes;
  std::vector<std::size_t> edges;
  AttributedGraph graph;

  bool empty() const noexcept { return nodes.empty(); }
};

inline constexpr double kDefaultEdgeCost = 0.5;

/// Ranks nodes by cosine similarity to `query` (ties to the lower index) and
/// gives the r-th ranked node (0-based) a prize of top_n - r while r < top_n.
/// A zero-norm query or feature row has similarity 0.
PrizedGraph assign_prizes(const AttributedGraph& g, std::span<const double> query, std::size_t top_n,
                          double edge_cost = kDefaultEdgeCost);

Subgraph extract_subgraph(const AttributedGraph& g, std::vector<std::size_t> nodes, std::vector<std::size_t> edges);

/// Grow-and-prune heuristic. From every positive-prize root a tree is grown
/// by repeatedly attaching the cheapest path (multi-source Dijkstra on edge
/// costs) with the largest positive net gain; each grown tree is then
/// strong-pruned to its best connected subtree. The best tree over all roots
/// is returned, or the empty subgraph when nothing beats zero.
Subgraph solve_pcst(const PrizedGraph& pg);

/// Σ prizes over sub.nodes − Σ costs over sub.edges.
double pcst_objective(const Subgraph& sub, const PrizedGraph& pg);

struct PcstOptimum {
  double objective = 0.0;
  std::vector<std::size_t> nodes;  // empty when the empty set is optimal
};

inline constexpr std::size_t kOracleMaxNodes = 12;

/// Exhaustive search over connected vertex subsets, costing each by the
/// minimum spanning tree of its induced edges. Refuses N > 12.
PcstOptimum exact_pcst_oracle(const PrizedGraph& pg);

}  // namespace gpool
