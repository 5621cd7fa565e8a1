#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "gpool/numerics.hpp"

namespace gpool {

struct Edge {
  std::size_t src = 0;
  std::size_t dst = 0;
  std::vector<double> feature;
  std::string relation;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Node-attributed graph with typed, featured edges.
///
/// Undirected graphs store each edge once with src <= dst. All edges carry
/// feature rows of the same width (possibly zero).
class AttributedGraph {
 public:
  AttributedGraph() = default;
  // Validates endpoints, feature widths and finiteness; canonicalizes
  // undirected edges and rejects duplicates.
  AttributedGraph(Matrix features, std::vector<Edge> edges,
                  std::optional<std::vector<std::string>> labels = std::nullopt, bool undirected = true);

  std::size_t node_count() const noexcept { return features_.rows(); }
  std::size_t feature_dim() const noexcept { return features_.cols(); }
  std::size_t edge_feature_dim() const noexcept { return edge_feature_dim_; }

  const Matrix& features() const noexcept { return features_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::optional<std::vector<std::string>>& labels() const noexcept { return labels_; }
  bool undirected() const noexcept { return undirected_; }

  /// Dense 0/1 adjacency; symmetric when undirected.
  Matrix adjacency() const;

  friend bool operator==(const AttributedGraph&, const AttributedGraph&) = default;

 private:
  Matrix features_;
  std::vector<Edge> edges_;
  std::optional<std::vector<std::string>> labels_;
  bool undirected_ = true;
  std::size_t edge_feature_dim_ = 0;
};

/// Bijection on {0..n-1}; node i maps to perm[i].
class PermutationMap {
 public:
  explicit PermutationMap(std::vector<std::size_t> perm);

  static PermutationMap identity(std::size_t n);
  static PermutationMap random(std::size_t n, DeterministicRng& rng);

  std::size_t size() const noexcept { return perm_.size(); }
  std::size_t operator()(std::size_t i) const noexcept { return perm_[i]; }
  const std::vector<std::size_t>& values() const noexcept { return perm_; }
  PermutationMap inverse() const;

  /// Row i of `m` moves to row perm(i).
  Matrix apply_rows(const Matrix& m) const;
  /// P M Pᵀ for a square node-indexed matrix.
  Matrix apply_square(const Matrix& m) const;

 private:
  std::vector<std::size_t> perm_;
};

/// D̃^{-1/2} (A + I) D̃^{-1/2} with D̃ the row sums of A + I.
Matrix normalized_adjacency(const AttributedGraph& g);
Matrix normalized_adjacency(const Matrix& adjacency);

AttributedGraph permute(const AttributedGraph& g, const PermutationMap& p);

/// Canonical text form:
///
///   nodes
///   0,<label>
///   ...
///   edges
///   <src label>,<relation>,<dst label>
///   ...
///
/// Node lines are the labels sorted lexicographically and numbered by that
/// order; edge lines are sorted. Undirected edges list the smaller label
/// first. The output therefore does not depend on node numbering.
std::string textualize(const AttributedGraph& g);

}  // namespace gpool
