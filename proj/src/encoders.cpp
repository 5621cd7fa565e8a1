#include "gpool/encoders.hpp"

#include <cmath>

#include "gpool/graph_io.hpp"

namespace gpool {
namespace {

using nlohmann::json;

struct DenseTrace {
  std::vector<Matrix> props;  // layer input after propagation (Â H or H)
  std::vector<Matrix> outs;   // layer output after activation
};

Matrix dense_stack(const Matrix& x, const Matrix* adj, const std::vector<DenseLayer>& layers, DenseTrace* trace) {
  Matrix h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix p = adj ? matmul(*adj, h) : h;
    Matrix z = add_row(matmul(p, layers[l].w), layers[l].b);
    if (l + 1 < layers.size()) z = activation(z, Activation::relu);
    if (trace) {
      trace->props.push_back(std::move(p));
      trace->outs.push_back(z);
    }
    h = std::move(z);
  }
  return h;
}

Matrix dense_stack_backward(const Matrix* adj, const std::vector<DenseLayer>& layers, const DenseTrace& trace,
                            Matrix d, std::vector<DenseLayer>& grads) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (l + 1 < layers.size()) d = activation_backward(trace.outs[l], d, Activation::relu);
    grads[l].w += matmul_tn(trace.props[l], d);
    grads[l].b += column_sums(d);
    Matrix dp = matmul_nt(d, layers[l].w);
    d = adj ? matmul_tn(*adj, dp) : std::move(dp);
  }
  return d;
}

struct AttentionLayerTrace {
  Matrix input, q, k, v, ke;
  std::vector<std::vector<double>> alpha;
  Matrix out;
};

struct AttentionTrace {
  std::vector<AttentionLayerTrace> layers;
};

bool uses_edges(const AttentionLayer& layer, const Neighborhood& nb) {
  return layer.we.rows() > 0 && nb.edge_features.rows() > 0;
}

Matrix attention_layer(const Matrix& h, const Neighborhood& nb, const AttentionLayer& layer, bool relu,
                       AttentionLayerTrace* trace) {
  if (nb.lists.size() != h.rows()) throw DimensionError("neighbourhood size does not match node count");
  Matrix q = matmul(h, layer.wq);
  Matrix k = matmul(h, layer.wk);
  Matrix v = matmul(h, layer.wv);
  const bool edges = uses_edges(layer, nb);
  if (edges && layer.we.rows() != nb.edge_features.cols()) {
    throw DimensionError("edge projection expects width " + std::to_string(layer.we.rows()) + ", edges have " +
                         std::to_string(nb.edge_features.cols()));
  }
  Matrix ke = edges ? matmul(nb.edge_features, layer.we) : Matrix();
  const double scale = 1.0 / std::sqrt(static_cast<double>(layer.wq.cols()));
  const std::size_t dk = q.cols();

  Matrix out(h.rows(), v.cols());
  std::vector<std::vector<double>> alpha(h.rows());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    const auto& list = nb.lists[i];
    auto& a = alpha[i];
    a.resize(list.size());
    double mx = -INFINITY;
    for (std::size_t t = 0; t < list.size(); ++t) {
      const auto [j, e] = list[t];
      double s = 0.0;
      for (std::size_t c = 0; c < dk; ++c) {
        const double key = k(j, c) + (edges && e >= 0 ? ke(static_cast<std::size_t>(e), c) : 0.0);
        s += q(i, c) * key;
      }
      a[t] = s * scale;
      mx = std::max(mx, a[t]);
    }
    double z = 0.0;
    for (double& s : a) {
      s = std::exp(s - mx);
      z += s;
    }
    for (std::size_t t = 0; t < list.size(); ++t) {
      a[t] /= z;
      const std::size_t j = list[t].node;
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += a[t] * v(j, c);
    }
  }
  if (relu) out = activation(out, Activation::relu);
  if (trace) *trace = {h, std::move(q), std::move(k), std::move(v), std::move(ke), std::move(alpha), out};
  return out;
}

Matrix attention_layer_backward(const Neighborhood& nb, const AttentionLayer& layer, bool relu,
                                const AttentionLayerTrace& t, Matrix d, AttentionLayer& grad) {
  if (relu) d = activation_backward(t.out, d, Activation::relu);
  const bool edges = uses_edges(layer, nb);
  const double scale = 1.0 / std::sqrt(static_cast<double>(layer.wq.cols()));
  const std::size_t dk = t.q.cols();
  Matrix dq(t.q.rows(), t.q.cols()), dk_m(t.k.rows(), t.k.cols()), dv(t.v.rows(), t.v.cols());
  Matrix dke = edges ? Matrix(t.ke.rows(), t.ke.cols()) : Matrix();

  for (std::size_t i = 0; i < t.input.rows(); ++i) {
    const auto& list = nb.lists[i];
    const auto& a = t.alpha[i];
    std::vector<double> da(list.size());
    double mean = 0.0;
    for (std::size_t s = 0; s < list.size(); ++s) {
      const std::size_t j = list[s].node;
      double acc = 0.0;
      for (std::size_t c = 0; c < t.v.cols(); ++c) {
        acc += d(i, c) * t.v(j, c);
        dv(j, c) += a[s] * d(i, c);
      }
      da[s] = acc;
      mean += a[s] * acc;
    }
    for (std::size_t s = 0; s < list.size(); ++s) {
      const auto [j, e] = list[s];
      const double ds = a[s] * (da[s] - mean) * scale;
      const bool has_edge = edges && e >= 0;
      for (std::size_t c = 0; c < dk; ++c) {
        const double key = t.k(j, c) + (has_edge ? t.ke(static_cast<std::size_t>(e), c) : 0.0);
        dq(i, c) += ds * key;
        dk_m(j, c) += ds * t.q(i, c);
        if (has_edge) dke(static_cast<std::size_t>(e), c) += ds * t.q(i, c);
      }
    }
  }
  grad.wq += matmul_tn(t.input, dq);
  grad.wk += matmul_tn(t.input, dk_m);
  grad.wv += matmul_tn(t.input, dv);
  if (edges) grad.we += matmul_tn(nb.edge_features, dke);
  Matrix dh = matmul_nt(dq, layer.wq);
  dh += matmul_nt(dk_m, layer.wk);
  dh += matmul_nt(dv, layer.wv);
  return dh;
}

Matrix attention_stack(const Matrix& x, const Neighborhood& nb, const std::vector<AttentionLayer>& layers,
                       AttentionTrace* trace) {
  Matrix h = x;
  if (trace) trace->layers.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = attention_layer(h, nb, layers[l], l + 1 < layers.size(), trace ? &trace->layers[l] : nullptr);
  }
  return h;
}

Matrix attention_stack_backward(const Neighborhood& nb, const std::vector<AttentionLayer>& layers,
                                const AttentionTrace& trace, Matrix d, std::vector<AttentionLayer>& grads) {
  for (std::size_t l = layers.size(); l-- > 0;) {
    d = attention_layer_backward(nb, layers[l], l + 1 < layers.size(), trace.layers[l], std::move(d), grads[l]);
  }
  return d;
}

void require_kind(const EncoderParams& p, EncoderKind kind) {
  if (p.kind != kind) {
    throw InvalidArgument("encoder kind " + std::string(to_string(p.kind)) + " used as " +
                          std::string(to_string(kind)));
  }
}

void require_input(const Matrix& x, const EncoderParams& p) {
  p.validate();
  if (x.cols() != p.input_dim()) {
    throw DimensionError("encoder expects input width " + std::to_string(p.input_dim()) + ", got " +
                         std::to_string(x.cols()));
  }
}

void require_adjacency(const Matrix& x, const Matrix& adj) {
  if (adj.rows() != x.rows() || adj.cols() != x.rows()) {
    throw DimensionError("normalized adjacency must be " + std::to_string(x.rows()) + "x" +
                         std::to_string(x.rows()));
  }
}

std::vector<DenseLayer> dense_layers(std::size_t in, std::size_t hidden, std::size_t out, std::size_t count,
                                     DeterministicRng& rng) {
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < count; ++l) {
    const std::size_t a = l == 0 ? in : hidden;
    const std::size_t b = l + 1 == count ? out : hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(a));
    layers.push_back({uniform_matrix(a, b, bound, rng), Matrix(1, b)});
  }
  return layers;
}

std::vector<AttentionLayer> attention_layers(std::size_t in, std::size_t hidden, std::size_t out, std::size_t count,
                                             std::size_t edge_dim, DeterministicRng& rng) {
  std::vector<AttentionLayer> layers;
  for (std::size_t l = 0; l < count; ++l) {
    const std::size_t a = l == 0 ? in : hidden;
    const std::size_t b = l + 1 == count ? out : hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(a));
    AttentionLayer layer{uniform_matrix(a, b, bound, rng), uniform_matrix(a, b, bound, rng),
                         uniform_matrix(a, b, bound, rng), Matrix(edge_dim, b)};
    if (edge_dim > 0) layer.we = uniform_matrix(edge_dim, b, 1.0 / std::sqrt(static_cast<double>(edge_dim)), rng);
    layers.push_back(std::move(layer));
  }
  return layers;
}

}  // namespace

std::string_view to_string(EncoderKind kind) noexcept {
  switch (kind) {
    case EncoderKind::mlp: return "mlp";
    case EncoderKind::gcn: return "gcn";
    case EncoderKind::attn: return "attn";
    case EncoderKind::sgformer: return "sgformer";
  }
  return "?";
}

EncoderKind encoder_kind_from_string(std::string_view name) {
  if (name == "mlp") return EncoderKind::mlp;
  if (name == "gcn") return EncoderKind::gcn;
  if (name == "attn") return EncoderKind::attn;
  if (name == "sgformer") return EncoderKind::sgformer;
  throw InvalidArgument("unknown encoder kind \"" + std::string(name) + "\"");
}

std::size_t EncoderParams::input_dim() const {
  if (!dense.empty() && kind != EncoderKind::attn) return dense.front().w.rows();
  if (!attention.empty()) return attention.front().wq.rows();
  return 0;
}

std::size_t EncoderParams::output_dim() const {
  if (!dense.empty() && kind != EncoderKind::attn) return dense.back().w.cols();
  if (!attention.empty()) return attention.back().wv.cols();
  return 0;
}

void EncoderParams::validate() const {
  const bool wants_dense = kind != EncoderKind::attn;
  const bool wants_attention = kind == EncoderKind::attn || kind == EncoderKind::sgformer;
  if (wants_dense && dense.empty()) throw DimensionError("encoder has no dense layers");
  if (wants_attention && attention.empty()) throw DimensionError("encoder has no attention layers");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("encoder alpha must lie in [0, 1]");
  for (std::size_t l = 0; l < dense.size(); ++l) {
    const auto& layer = dense[l];
    if (layer.b.rows() != 1 || layer.b.cols() != layer.w.cols()) throw DimensionError("dense bias shape mismatch");
    if (l > 0 && layer.w.rows() != dense[l - 1].w.cols()) throw DimensionError("dense layers do not chain");
  }
  for (std::size_t l = 0; l < attention.size(); ++l) {
    const auto& layer = attention[l];
    if (layer.wk.rows() != layer.wq.rows() || layer.wv.rows() != layer.wq.rows() ||
        layer.wk.cols() != layer.wq.cols()) {
      throw DimensionError("attention projections disagree");
    }
    if (layer.we.rows() > 0 && layer.we.cols() != layer.wk.cols()) throw DimensionError("edge projection width");
    if (l > 0 && layer.wq.rows() != attention[l - 1].wv.cols()) throw DimensionError("attention layers do not chain");
  }
  if (kind == EncoderKind::sgformer) {
    if (dense.front().w.rows() != attention.front().wq.rows() || dense.back().w.cols() != attention.back().wv.cols()) {
      throw DimensionError("sgformer branches disagree on input or output width");
    }
  }
}

EncoderParams init_encoder(EncoderKind kind, const EncoderShape& s, DeterministicRng& rng) {
  if (s.input_dim == 0 || s.output_dim == 0 || s.layers == 0) throw InvalidArgument("encoder shape must be positive");
  EncoderParams p;
  p.kind = kind;
  p.alpha = s.alpha;
  switch (kind) {
    case EncoderKind::mlp:
    case EncoderKind::gcn:
      p.dense = dense_layers(s.input_dim, s.hidden_dim, s.output_dim, s.layers, rng);
      break;
    case EncoderKind::attn:
      p.attention = attention_layers(s.input_dim, s.hidden_dim, s.output_dim, s.layers, s.edge_dim, rng);
      break;
    case EncoderKind::sgformer:
      p.dense = dense_layers(s.input_dim, s.hidden_dim, s.output_dim, s.layers, rng);
      p.attention = attention_layers(s.input_dim, s.hidden_dim, s.output_dim, s.attention_layers, 0, rng);
      break;
  }
  p.validate();
  return p;
}

EncoderParams zeros_like(const EncoderParams& p) {
  EncoderParams z = p;
  for_each_param(z, "", [](const std::string&, Matrix& m) { m *= 0.0; });
  return z;
}

void for_each_param(EncoderParams& p, const std::string& prefix, const ParamVisitor& fn) {
  for (std::size_t l = 0; l < p.dense.size(); ++l) {
    const std::string at = prefix + "dense" + std::to_string(l) + ".";
    fn(at + "w", p.dense[l].w);
    fn(at + "b", p.dense[l].b);
  }
  for (std::size_t l = 0; l < p.attention.size(); ++l) {
    const std::string at = prefix + "attn" + std::to_string(l) + ".";
    fn(at + "wq", p.attention[l].wq);
    fn(at + "wk", p.attention[l].wk);
    fn(at + "wv", p.attention[l].wv);
    if (p.attention[l].we.size() > 0) fn(at + "we", p.attention[l].we);
  }
}

void for_each_param(const EncoderParams& p, const std::string& prefix, const ConstParamVisitor& fn) {
  for_each_param(const_cast<EncoderParams&>(p), prefix,
                 [&](const std::string& name, Matrix& m) { fn(name, m); });
}

Neighborhood local_neighborhood(const AttributedGraph& g) {
  Neighborhood nb;
  nb.lists.resize(g.node_count());
  for (std::size_t i = 0; i < g.node_count(); ++i) nb.lists[i].push_back({i, -1});
  const auto& edges = g.edges();
  nb.edge_features = Matrix(edges.size(), g.edge_feature_dim());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    std::copy(edges[e].feature.begin(), edges[e].feature.end(), nb.edge_features.row(e).begin());
    const auto idx = static_cast<std::ptrdiff_t>(e);
    nb.lists[edges[e].dst].push_back({edges[e].src, idx});
    if (g.undirected() && edges[e].src != edges[e].dst) nb.lists[edges[e].src].push_back({edges[e].dst, idx});
  }
  return nb;
}

Neighborhood dense_neighborhood(std::size_t n) {
  Neighborhood nb;
  nb.lists.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) nb.lists[i].push_back({j, -1});
  return nb;
}

GraphContext GraphContext::from(const AttributedGraph& g) {
  Matrix a = g.adjacency();
  Matrix norm = normalized_adjacency(a);
  return {std::move(a), std::move(norm), local_neighborhood(g)};
}

Matrix mlp_forward(const Matrix& x, const EncoderParams& p) {
  require_kind(p, EncoderKind::mlp);
  require_input(x, p);
  return dense_stack(x, nullptr, p.dense, nullptr);
}

Matrix gcn_forward(const Matrix& x, const Matrix& norm_adj, const EncoderParams& p) {
  require_kind(p, EncoderKind::gcn);
  require_input(x, p);
  require_adjacency(x, norm_adj);
  return dense_stack(x, &norm_adj, p.dense, nullptr);
}

Matrix attn_conv_forward(const Matrix& x, const Neighborhood& nb, const EncoderParams& p) {
  require_kind(p, EncoderKind::attn);
  require_input(x, p);
  return attention_stack(x, nb, p.attention, nullptr);
}

Matrix sgformer_forward(const Matrix& x, const Matrix& norm_adj, const EncoderParams& p) {
  require_kind(p, EncoderKind::sgformer);
  require_input(x, p);
  require_adjacency(x, norm_adj);
  Matrix local = dense_stack(x, &norm_adj, p.dense, nullptr);
  Matrix global = attention_stack(x, dense_neighborhood(x.rows()), p.attention, nullptr);
  return local * p.alpha + global * (1.0 - p.alpha);
}

Matrix encoder_forward(const Matrix& x, const GraphContext& ctx, const EncoderParams& p) {
  switch (p.kind) {
    case EncoderKind::mlp: return mlp_forward(x, p);
    case EncoderKind::gcn: return gcn_forward(x, ctx.normalized, p);
    case EncoderKind::attn: return attn_conv_forward(x, ctx.neighborhood, p);
    case EncoderKind::sgformer: return sgformer_forward(x, ctx.normalized, p);
  }
  throw InvalidArgument("unknown encoder kind");
}

EncoderGrads encoder_backward(const Matrix& x, const GraphContext& ctx, const EncoderParams& p,
                              const Matrix& grad_out) {
  require_input(x, p);
  EncoderGrads g{Matrix(), zeros_like(p)};
  switch (p.kind) {
    case EncoderKind::mlp:
    case EncoderKind::gcn: {
      const Matrix* adj = p.kind == EncoderKind::gcn ? &ctx.normalized : nullptr;
      DenseTrace trace;
      dense_stack(x, adj, p.dense, &trace);
      g.input = dense_stack_backward(adj, p.dense, trace, grad_out, g.params.dense);
      break;
    }
    case EncoderKind::attn: {
      AttentionTrace trace;
      attention_stack(x, ctx.neighborhood, p.attention, &trace);
      g.input = attention_stack_backward(ctx.neighborhood, p.attention, trace, grad_out, g.params.attention);
      break;
    }
    case EncoderKind::sgformer: {
      DenseTrace local;
      dense_stack(x, &ctx.normalized, p.dense, &local);
      const Neighborhood all = dense_neighborhood(x.rows());
      AttentionTrace global;
      attention_stack(x, all, p.attention, &global);
      g.input = dense_stack_backward(&ctx.normalized, p.dense, local, grad_out * p.alpha, g.params.dense);
      g.input += attention_stack_backward(all, p.attention, global, grad_out * (1.0 - p.alpha), g.params.attention);
      break;
    }
  }
  return g;
}

json encoder_to_json(const EncoderParams& p) {
  json layers = json::array();
  for (const auto& l : p.dense) layers.push_back({{"w", matrix_to_json(l.w)}, {"b", l.b.data()}});
  json j = {{"kind", std::string(to_string(p.kind))}, {"layers", std::move(layers)}, {"alpha", p.alpha}};
  if (!p.attention.empty()) {
    json att = json::array();
    for (const auto& l : p.attention) {
      att.push_back({{"wq", matrix_to_json(l.wq)},
                     {"wk", matrix_to_json(l.wk)},
                     {"wv", matrix_to_json(l.wv)},
                     {"we", matrix_to_json(l.we)},
                     {"we_cols", l.we.cols()}});
    }
    j["attention"] = std::move(att);
  }
  return j;
}

EncoderParams encoder_from_json(const json& j) {
  try {
    EncoderParams p;
    p.kind = encoder_kind_from_string(j.at("kind").get<std::string>());
    p.alpha = j.value("alpha", 0.5);
    for (std::size_t l = 0; l < j.at("layers").size(); ++l) {
      const json& lj = j.at("layers")[l];
      const std::string at = "layers[" + std::to_string(l) + "]";
      Matrix w = matrix_from_json(lj.at("w"), at + ".w");
      auto b = lj.at("b").get<std::vector<double>>();
      p.dense.push_back({std::move(w), Matrix::row_vector(b)});
    }
    if (auto it = j.find("attention"); it != j.end()) {
      for (std::size_t l = 0; l < it->size(); ++l) {
        const json& lj = (*it)[l];
        const std::string at = "attention[" + std::to_string(l) + "]";
        AttentionLayer layer{matrix_from_json(lj.at("wq"), at + ".wq"), matrix_from_json(lj.at("wk"), at + ".wk"),
                             matrix_from_json(lj.at("wv"), at + ".wv"), matrix_from_json(lj.at("we"), at + ".we")};
        // An edge projection with zero rows loses its width in JSON.
        if (layer.we.rows() == 0) layer.we = Matrix(0, lj.value("we_cols", layer.wk.cols()));
        p.attention.push_back(std::move(layer));
      }
    }
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("encoder checkpoint: ") + e.what());
  }
}

}  // namespace gpool
