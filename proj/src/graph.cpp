#include "gpool/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <utility>

namespace gpool {

AttributedGraph::AttributedGraph(Matrix features, std::vector<Edge> edges,
                                 std::optional<std::vector<std::string>> labels, bool undirected)
    : features_(std::move(features)), edges_(std::move(edges)), labels_(std::move(labels)),
      undirected_(undirected) {
  const std::size_t n = features_.rows();
  if (!features_.all_finite()) throw NumericalError("node features contain non-finite values");
  if (labels_ && labels_->size() != n) {
    throw DimensionError("expected " + std::to_string(n) + " node labels, got " +
                         std::to_string(labels_->size()));
  }
  edge_feature_dim_ = edges_.empty() ? 0 : edges_.front().feature.size();
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    Edge& edge = edges_[e];
    if (edge.src >= n || edge.dst >= n) {
      throw InvalidArgument("edge " + std::to_string(e) + " endpoint out of range for " +
                            std::to_string(n) + " nodes");
    }
    if (edge.feature.size() != edge_feature_dim_) {
      throw DimensionError("edge " + std::to_string(e) + " feature width differs");
    }
    for (double v : edge.feature) {
      if (!std::isfinite(v)) throw NumericalError("edge " + std::to_string(e) + " feature not finite");
    }
    if (undirected_ && edge.src > edge.dst) std::swap(edge.src, edge.dst);
    if (!seen.emplace(edge.src, edge.dst).second) {
      throw InvalidArgument("duplicate edge " + std::to_string(edge.src) + "-" + std::to_string(edge.dst));
    }
  }
}

Matrix AttributedGraph::adjacency() const {
  Matrix a(node_count(), node_count());
  for (const Edge& e : edges_) {
    a(e.src, e.dst) = 1.0;
    if (undirected_) a(e.dst, e.src) = 1.0;
  }
  return a;
}

PermutationMap::PermutationMap(std::vector<std::size_t> perm) : perm_(std::move(perm)) {
  std::vector<bool> hit(perm_.size(), false);
  for (std::size_t v : perm_) {
    if (v >= perm_.size() || hit[v]) throw InvalidArgument("permutation is not a bijection");
    hit[v] = true;
  }
}

PermutationMap PermutationMap::identity(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return PermutationMap(std::move(p));
}

PermutationMap PermutationMap::random(std::size_t n, DeterministicRng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return PermutationMap(std::move(p));
}

PermutationMap PermutationMap::inverse() const {
  std::vector<std::size_t> inv(perm_.size());
  for (std::size_t i = 0; i < perm_.size(); ++i) inv[perm_[i]] = i;
  return PermutationMap(std::move(inv));
}

Matrix PermutationMap::apply_rows(const Matrix& m) const {
  if (m.rows() != size()) throw DimensionError("permutation size does not match matrix rows");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) std::copy(m.row(i).begin(), m.row(i).end(), out.row(perm_[i]).begin());
  return out;
}

Matrix PermutationMap::apply_square(const Matrix& m) const {
  if (m.rows() != size() || m.cols() != size()) throw DimensionError("permutation size does not match matrix");
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(perm_[i], perm_[j]) = m(i, j);
  return out;
}

Matrix normalized_adjacency(const Matrix& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw DimensionError("adjacency must be square");
  const std::size_t n = adjacency.rows();
  Matrix a = adjacency + Matrix::identity(n);
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += a(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) *= inv_sqrt[i] * inv_sqrt[j];
  return a;
}

Matrix normalized_adjacency(const AttributedGraph& g) { return normalized_adjacency(g.adjacency()); }

AttributedGraph permute(const AttributedGraph& g, const PermutationMap& p) {
  if (p.size() != g.node_count()) throw DimensionError("permutation size does not match node count");
  std::vector<Edge> edges = g.edges();
  for (Edge& e : edges) {
    e.src = p(e.src);
    e.dst = p(e.dst);
  }
  std::optional<std::vector<std::string>> labels;
  if (g.labels()) {
    labels.emplace(g.node_count());
    for (std::size_t i = 0; i < g.node_count(); ++i) (*labels)[p(i)] = (*g.labels())[i];
  }
  return AttributedGraph(p.apply_rows(g.features()), std::move(edges), std::move(labels), g.undirected());
}

std::string textualize(const AttributedGraph& g) {
  if (!g.labels()) throw InvalidArgument("textualize requires node labels");
  const auto& labels = *g.labels();

  std::vector<std::string> nodes = labels;
  std::sort(nodes.begin(), nodes.end());

  std::vector<std::string> edges;
  edges.reserve(g.edges().size());
  for (const Edge& e : g.edges()) {
    std::string a = labels[e.src];
    std::string b = labels[e.dst];
    if (g.undirected() && b < a) std::swap(a, b);
    edges.push_back(a + "," + e.relation + "," + b);
  }
  std::sort(edges.begin(), edges.end());

  std::ostringstream out;
  out << "nodes\n";
  for (std::size_t i = 0; i < nodes.size(); ++i) out << i << ',' << nodes[i] << '\n';
  out << "edges\n";
  for (const auto& line : edges) out << line << '\n';
  return out.str();
}

}  // namespace gpool
