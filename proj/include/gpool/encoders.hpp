#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gpool/graph.hpp"
#include "gpool/numerics.hpp"

namespace gpool {

enum class EncoderKind { mlp, gcn, attn, sgformer };

std::string_view to_string(EncoderKind kind) noexcept;
EncoderKind encoder_kind_from_string(std::string_view name);

/// y = x w + b, w: in×out, b: 1×out.
struct DenseLayer {
  Matrix w;
  Matrix b;
};

/// Scaled dot-product attention layer. `we` (edge_dim×out) adds projected
/// edge features to the keys; it has zero rows when edges are featureless
/// or the layer attends over all node pairs.
struct AttentionLayer {
  Matrix wq;
  Matrix wk;
  Matrix wv;
  Matrix we;
};

/// Weights for one encoder. mlp and gcn use `dense`, attn uses `attention`,
/// sgformer uses both: `dense` is the GCN branch and `attention` the global
/// attention branch, mixed as alpha·gcn + (1 − alpha)·attention.
struct EncoderParams {
  EncoderKind kind = EncoderKind::mlp;
  std::vector<DenseLayer> dense;
  std::vector<AttentionLayer> attention;
  double alpha = 0.5;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  // Throws DimensionError when layer shapes do not chain.
  void validate() const;
};

struct EncoderShape {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 16;
  std::size_t output_dim = 16;
  std::size_t layers = 2;
  std::size_t attention_layers = 2;  // sgformer global branch only
  std::size_t edge_dim = 0;          // attn only
  double alpha = 0.5;                // sgformer only
};

/// Weights ~ uniform(−1/√fan_in, 1/√fan_in), biases zero.
EncoderParams init_encoder(EncoderKind kind, const EncoderShape& shape, DeterministicRng& rng);

/// Same structure as `p`, all entries zero; used as a gradient accumulator.
EncoderParams zeros_like(const EncoderParams& p);

using ParamVisitor = std::function<void(const std::string& name, Matrix& value)>;
using ConstParamVisitor = std::function<void(const std::string& name, const Matrix& value)>;
void for_each_param(EncoderParams& p, const std::string& prefix, const ParamVisitor& fn);
void for_each_param(const EncoderParams& p, const std::string& prefix, const ConstParamVisitor& fn);

/// Attention neighbourhoods. Entry (j, e) in list i means node i attends to
/// node j, with e the row of `edge_features` added to the key (−1 for none).
struct Neighborhood {
  struct Entry {
    std::size_t node;
    std::ptrdiff_t edge;
  };
  std::vector<std::vector<Entry>> lists;
  Matrix edge_features;
};

/// N(i) ∪ {i}: a self entry plus one entry per incident edge (both
/// directions for undirected edges, src → dst otherwise).
Neighborhood local_neighborhood(const AttributedGraph& g);
/// Every node attends to every node, no edge features.
Neighborhood dense_neighborhood(std::size_t n);

/// Everything the encoders and pooling operators need from a graph.
struct GraphContext {
  Matrix adjacency;
  Matrix normalized;
  Neighborhood neighborhood;

  static GraphContext from(const AttributedGraph& g);
};

Matrix mlp_forward(const Matrix& x, const EncoderParams& p);
Matrix gcn_forward(const Matrix& x, const Matrix& norm_adj, const EncoderParams& p);
Matrix attn_conv_forward(const Matrix& x, const Neighborhood& nb, const EncoderParams& p);
Matrix sgformer_forward(const Matrix& x, const Matrix& norm_adj, const EncoderParams& p);

/// Dispatches on p.kind.
Matrix encoder_forward(const Matrix& x, const GraphContext& ctx, const EncoderParams& p);

struct EncoderGrads {
  Matrix input;
  EncoderParams params;
};

/// Gradients of ⟨grad_out, encoder_forward(x)⟩ w.r.t. x and every weight.
EncoderGrads encoder_backward(const Matrix& x, const GraphContext& ctx, const EncoderParams& p,
                              const Matrix& grad_out);

nlohmann::json encoder_to_json(const EncoderParams& p);
EncoderParams encoder_from_json(const nlohmann::json& j);

}  // namespace gpool
