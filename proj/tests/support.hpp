#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gpool/graph.hpp"
#include "gpool/numerics.hpp"

namespace gpool::test {

inline AttributedGraph random_graph(DeterministicRng& rng, std::size_t n, std::size_t d, double density = 0.4,
                                    std::size_t edge_dim = 0) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.uniform01() < density) {
        std::vector<double> f(edge_dim);
        for (double& v : f) v = rng.uniform(-1.0, 1.0);
        edges.push_back({i, j, f, "r"});
      }
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < n; ++i) labels.push_back("n" + std::to_string(i));
  return AttributedGraph(uniform_matrix(n, d, 1.0, rng), edges, labels);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Central-difference gradient of f with respect to `target`, which f reads.
inline Matrix fd_wrt(Matrix& target, const std::function<double()>& f) {
  const Matrix saved = target;
  const Matrix g = central_difference_gradient(
      [&](const Matrix& m) {
        target = m;
        return f();
      },
      saved);
  target = saved;
  return g;
}

}  // namespace gpool::test
