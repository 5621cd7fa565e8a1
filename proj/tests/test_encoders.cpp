#include <doctest.h>

#include <cmath>

#include "gpool/encoders.hpp"
#include "support.hpp"

using namespace gpool;
using test::max_abs_diff;

namespace {

constexpr EncoderKind kKinds[] = {EncoderKind::mlp, EncoderKind::gcn, EncoderKind::attn, EncoderKind::sgformer};

EncoderParams make(EncoderKind kind, std::size_t in, std::size_t edge_dim, DeterministicRng& rng) {
  EncoderShape s;
  s.input_dim = in;
  s.hidden_dim = 5;
  s.output_dim = 3;
  s.layers = 2;
  s.attention_layers = 2;
  s.edge_dim = kind == EncoderKind::attn ? edge_dim : 0;
  return init_encoder(kind, s, rng);
}

// Unit-scale weights and biases so every branch carries signal.
void randomize(EncoderParams& p, DeterministicRng& rng) {
  for_each_param(p, "", [&](const std::string&, Matrix& m) { m = uniform_matrix(m.rows(), m.cols(), 1.0, rng); });
}

}  // namespace

TEST_CASE("single linear MLP layer with identity weights is the identity") {
  EncoderParams p;
  p.kind = EncoderKind::mlp;
  p.dense.push_back({Matrix::identity(3), Matrix(1, 3)});
  DeterministicRng rng(1);
  const Matrix x = uniform_matrix(4, 3, 2.0, rng);
  CHECK(mlp_forward(x, p) == x);
}

TEST_CASE("MLP is row-local") {
  DeterministicRng rng(2);
  const EncoderParams p = make(EncoderKind::mlp, 4, 0, rng);
  Matrix x = uniform_matrix(5, 4, 1.0, rng);
  const Matrix before = mlp_forward(x, p);
  x(2, 1) += 0.7;
  const Matrix after = mlp_forward(x, p);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      if (i != 2) CHECK(after(i, c) == before(i, c));
}

TEST_CASE("two-node GCN by hand") {
  EncoderParams p;
  p.kind = EncoderKind::gcn;
  p.dense.push_back({Matrix{{1.0}}, Matrix{{0.0}}});
  const AttributedGraph g(Matrix{{1.0}, {3.0}}, {{0, 1, {}, ""}});
  const Matrix out = gcn_forward(g.features(), normalized_adjacency(g), p);
  CHECK(out(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(out(1, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("attention on an isolated node returns x W_V") {
  DeterministicRng rng(3);
  EncoderParams p;
  p.kind = EncoderKind::attn;
  p.attention.push_back({uniform_matrix(3, 2, 1.0, rng), uniform_matrix(3, 2, 1.0, rng), uniform_matrix(3, 2, 1.0, rng),
                         Matrix(0, 2)});
  const AttributedGraph g(uniform_matrix(1, 3, 1.0, rng), {});
  const Matrix out = attn_conv_forward(g.features(), local_neighborhood(g), p);
  CHECK(max_abs_diff(out, matmul(g.features(), p.attention[0].wv)) < 1e-15);
}

TEST_CASE("attention on a three-node star matches a direct evaluation") {
  DeterministicRng rng(4);
  const std::size_t d = 3, dk = 2;
  AttentionLayer layer{uniform_matrix(d, dk, 1.0, rng), uniform_matrix(d, dk, 1.0, rng),
                       uniform_matrix(d, dk, 1.0, rng), uniform_matrix(2, dk, 1.0, rng)};
  EncoderParams p;
  p.kind = EncoderKind::attn;
  p.attention.push_back(layer);
  const AttributedGraph g(uniform_matrix(3, d, 1.0, rng), {{0, 1, {0.5, -1.0}, "a"}, {0, 2, {2.0, 0.25}, "b"}});
  const Matrix out = attn_conv_forward(g.features(), local_neighborhood(g), p);

  const Matrix q = matmul(g.features(), layer.wq), k = matmul(g.features(), layer.wk),
               v = matmul(g.features(), layer.wv);
  const Matrix e = matmul(Matrix{{0.5, -1.0}, {2.0, 0.25}}, layer.we);
  // (neighbour, edge row or -1) for each node.
  const std::vector<std::vector<std::pair<int, int>>> nbrs{{{0, -1}, {1, 0}, {2, 1}}, {{1, -1}, {0, 0}}, {{2, -1}, {0, 1}}};
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> w;
    double z = 0.0;
    for (auto [j, ei] : nbrs[i]) {
      double s = 0.0;
      for (std::size_t c = 0; c < dk; ++c) s += q(i, c) * (k(j, c) + (ei >= 0 ? e(ei, c) : 0.0));
      w.push_back(std::exp(s / std::sqrt(2.0)));
      z += w.back();
    }
    for (std::size_t c = 0; c < dk; ++c) {
      double expect = 0.0;
      for (std::size_t t = 0; t < w.size(); ++t) expect += w[t] / z * v(nbrs[i][t].first, c);
      CHECK(out(i, c) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("sgformer endpoints reduce to its branches") {
  DeterministicRng rng(5);
  const AttributedGraph g = test::random_graph(rng, 6, 4);
  EncoderParams p = make(EncoderKind::sgformer, 4, 0, rng);
  const Matrix norm = normalized_adjacency(g);

  EncoderParams gcn{EncoderKind::gcn, p.dense, {}, 0.5};
  EncoderParams attn{EncoderKind::attn, {}, p.attention, 0.5};
  const Matrix local = gcn_forward(g.features(), norm, gcn);
  const Matrix global = attn_conv_forward(g.features(), dense_neighborhood(6), attn);

  p.alpha = 1.0;
  CHECK(sgformer_forward(g.features(), norm, p) == local);
  p.alpha = 0.0;
  CHECK(sgformer_forward(g.features(), norm, p) == global);
  p.alpha = 0.5;
  CHECK(max_abs_diff(sgformer_forward(g.features(), norm, p), (local + global) * 0.5) < 1e-15);
}

TEST_CASE("encoders are permutation equivariant") {
  DeterministicRng rng(6);
  for (EncoderKind kind : kKinds) {
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t n = 2 + rng.below(10);
      const AttributedGraph g = test::random_graph(rng, n, 4, 0.4, 2);
      const EncoderParams p = make(kind, 4, 2, rng);
      const PermutationMap perm = PermutationMap::random(n, rng);
      const AttributedGraph pg = permute(g, perm);
      const Matrix a = perm.apply_rows(encoder_forward(g.features(), GraphContext::from(g), p));
      const Matrix b = encoder_forward(pg.features(), GraphContext::from(pg), p);
      CHECK(max_abs_diff(a, b) < 1e-9);
    }
  }
}

TEST_CASE("encoder gradients match finite differences") {
  DeterministicRng rng(7);
  for (EncoderKind kind : kKinds) {
    CAPTURE(to_string(kind));
    for (int trial = 0; trial < 3; ++trial) {
      const AttributedGraph g = test::random_graph(rng, 3 + rng.below(6), 4, 0.5, 2);
      const GraphContext ctx = GraphContext::from(g);
      EncoderParams p = make(kind, 4, 2, rng);
      randomize(p, rng);
      Matrix x = g.features();
      const Matrix r = uniform_matrix(x.rows(), 3, 1.0, rng);
      auto loss = [&] { return frobenius_dot(encoder_forward(x, ctx, p), r); };
      const EncoderGrads grads = encoder_backward(x, ctx, p, r);
      CHECK(relative_error(grads.input, test::fd_wrt(x, loss)) < 1e-5);
      std::vector<Matrix> analytic;
      for_each_param(grads.params, "", [&](const std::string&, const Matrix& m) { analytic.push_back(m); });
      std::size_t i = 0;
      for_each_param(p, "", [&](const std::string& name, Matrix& m) {
        CAPTURE(name);
        if (m.empty()) {
          ++i;
          return;
        }
        CHECK(relative_error(analytic[i++], test::fd_wrt(m, loss)) < 1e-5);
      });
    }
  }
}

TEST_CASE("encoder checkpoints round-trip through JSON") {
  DeterministicRng rng(8);
  for (EncoderKind kind : kKinds) {
    const EncoderParams p = make(kind, 4, 2, rng);
    const EncoderParams q = encoder_from_json(nlohmann::json::parse(encoder_to_json(p).dump()));
    CHECK(q.kind == p.kind);
    CHECK(q.alpha == p.alpha);
    std::vector<Matrix> a, b;
    for_each_param(p, "", [&](const std::string&, const Matrix& m) { a.push_back(m); });
    for_each_param(q, "", [&](const std::string&, const Matrix& m) { b.push_back(m); });
    CHECK(a == b);
  }
  CHECK_THROWS_AS(encoder_from_json(nlohmann::json{{"kind", "mlp"}}), ParseError);
  CHECK_THROWS_AS(encoder_kind_from_string("gat"), InvalidArgument);
}

TEST_CASE("encoders stay finite for bounded inputs") {
  DeterministicRng rng(9);
  for (EncoderKind kind : kKinds) {
    for (int trial = 0; trial < 5; ++trial) {
      AttributedGraph g = test::random_graph(rng, 8, 4, 0.5, 2);
      const Matrix x = uniform_matrix(8, 4, 1e3, rng);
      const EncoderParams p = make(kind, 4, 2, rng);
      CHECK(encoder_forward(x, GraphContext::from(g), p).all_finite());
    }
  }
}

TEST_CASE("encoder shape errors") {
  DeterministicRng rng(10);
  const EncoderParams p = make(EncoderKind::mlp, 4, 0, rng);
  CHECK_THROWS_AS(mlp_forward(Matrix(2, 3), p), DimensionError);
  CHECK_THROWS_AS(gcn_forward(Matrix(2, 4), Matrix::identity(2), p), InvalidArgument);
  EncoderShape s;
  CHECK_THROWS_AS(init_encoder(EncoderKind::mlp, s, rng), InvalidArgument);
}
