#include "gpool/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gpool/graph.hpp"

namespace gpool {
namespace {

constexpr double kEntropyEps = 1e-12;

void require_nonempty(const Matrix& h, const char* op) {
  if (h.rows() == 0 || h.cols() == 0) throw DimensionError(std::string(op) + ": empty node matrix");
}

void require_rho(double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw InvalidArgument("retention ratio must lie in (0, 1]");
}

void require_square(const Matrix& a, std::size_t n, const char* op) {
  if (a.rows() != n || a.cols() != n) {
    throw DimensionError(std::string(op) + ": adjacency must be " + std::to_string(n) + "x" + std::to_string(n));
  }
}

double aux_weight(const PoolUpstream& up, const char* name) {
  auto it = up.aux.find(name);
  return it == up.aux.end() ? 0.0 : it->second;
}

// Indices of the `count` largest scores, descending. Equal scores are ordered
// by the node's feature row (lexicographically larger first), then by lower
// index, so tied nodes are ranked the same way under any node numbering.
std::vector<std::size_t> select_top(const Matrix& h, const std::vector<double>& scores, std::size_t count) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    const auto ra = h.row(a), rb = h.row(b);
    return std::lexicographical_compare(rb.begin(), rb.end(), ra.begin(), ra.end());
  });
  order.resize(count);
  return order;
}

PoolResult gated_selection(const Matrix& h, const std::vector<double>& scores, double rho) {
  const auto sel = select_top(h, scores, retained_count(h.rows(), rho));
  PoolResult r;
  r.tokens = Matrix(sel.size(), h.cols());
  for (std::size_t t = 0; t < sel.size(); ++t) {
    const double gate = std::tanh(scores[sel[t]]);
    for (std::size_t c = 0; c < h.cols(); ++c) r.tokens(t, c) = h(sel[t], c) * gate;
  }
  r.selection = sel;
  return r;
}

// Given d tokens of a gated selection, returns dH (direct path) and dy (per
// node score gradient).
std::pair<Matrix, std::vector<double>> gated_selection_backward(const Matrix& h, const std::vector<double>& scores,
                                                                const std::vector<std::size_t>& sel,
                                                                const Matrix& d_tokens) {
  Matrix dh(h.rows(), h.cols());
  std::vector<double> dy(h.rows(), 0.0);
  for (std::size_t t = 0; t < sel.size(); ++t) {
    const std::size_t i = sel[t];
    const double gate = std::tanh(scores[i]);
    double dot = 0.0;
    for (std::size_t c = 0; c < h.cols(); ++c) {
      dh(i, c) += d_tokens(t, c) * gate;
      dot += d_tokens(t, c) * h(i, c);
    }
    dy[i] += dot * (1.0 - gate * gate);
  }
  return {std::move(dh), std::move(dy)};
}

std::vector<double> topk_scores(const Matrix& h, const Matrix& projection) {
  if (projection.rows() != h.cols() || projection.cols() != 1) {
    throw DimensionError("topk projection must be " + std::to_string(h.cols()) + "x1");
  }
  const double norm = frobenius_norm(projection);
  if (norm == 0.0) throw InvalidArgument("topk projection vector has zero norm");
  Matrix y = matmul(h, projection);
  std::vector<double> s(h.rows());
  for (std::size_t i = 0; i < h.rows(); ++i) s[i] = y(i, 0) / norm;
  return s;
}

// Â X with every neighbourhood sum taken over its terms in ascending order,
// so nodes with the same multiset of terms get bit-identical rows whatever
// the node numbering.
Matrix propagate_sorted(const Matrix& adj, const Matrix& x) {
  Matrix out(adj.rows(), x.cols());
  std::vector<double> terms;
  for (std::size_t i = 0; i < adj.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) {
      terms.clear();
      for (std::size_t j = 0; j < adj.cols(); ++j)
        if (adj(i, j) != 0.0) terms.push_back(adj(i, j) * x(j, c));
      std::sort(terms.begin(), terms.end());
      double acc = 0.0;
      for (double t : terms) acc += t;
      out(i, c) = acc;
    }
  return out;
}

std::vector<double> sag_scores(const Matrix& h, const Matrix& norm_adj, const EncoderParams& scorer) {
  if (scorer.kind != EncoderKind::gcn) throw InvalidArgument("SAGPool scorer must be a GCN");
  if (scorer.output_dim() != 1) throw DimensionError("SAGPool scorer must map to width 1");
  require_square(norm_adj, h.rows(), "sag_pool");
  Matrix x = h;
  for (std::size_t l = 0; l < scorer.dense.size(); ++l) {
    x = add_row(matmul(propagate_sorted(norm_adj, x), scorer.dense[l].w), scorer.dense[l].b);
    if (l + 1 < scorer.dense.size()) x = activation(x, Activation::relu);
  }
  return {x.data().begin(), x.data().end()};
}

std::size_t effective_clusters(std::size_t requested, std::size_t nodes, std::size_t logits_width) {
  if (requested < 1) throw InvalidArgument("cluster count must be at least 1");
  if (logits_width != requested) {
    throw DimensionError("assignment network outputs " + std::to_string(logits_width) + " columns, expected " +
                         std::to_string(requested));
  }
  return std::min(requested, nodes);
}

Matrix leading_columns(const Matrix& m, std::size_t cols) {
  if (cols == m.cols()) return m;
  Matrix out(m.rows(), cols);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = m(i, j);
  return out;
}

Matrix pad_columns(const Matrix& m, std::size_t cols) {
  if (cols == m.cols()) return m;
  Matrix out(m.rows(), cols);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j);
  return out;
}

double link_prediction_loss(const Matrix& a, const Matrix& s) {
  const double n = static_cast<double>(a.rows());
  return frobenius_norm(a - matmul_nt(s, s)) / (n * n);
}

// Entries within kEntropyEps of 1 would contribute a tiny negative term; they
// are clamped to 0 so that one-hot rows have exactly zero entropy.
bool entropy_clamped(double v) { return v + kEntropyEps > 1.0; }

double assignment_entropy(const Matrix& s) {
  double acc = 0.0;
  for (double v : s.data())
    if (!entropy_clamped(v)) acc -= v * std::log(v + kEntropyEps);
  return acc / static_cast<double>(s.rows());
}

std::vector<double> degrees(const Matrix& a) {
  std::vector<double> d(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) d[i] += a(i, j);
  return d;
}

Matrix scale_rows(Matrix m, const std::vector<double>& f) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) *= f[i];
  return m;
}

struct MinCutTerms {
  double num = 0.0;
  double den = 0.0;
  double cut = 0.0;
  Matrix gram;  // SᵀS
  double gram_norm = 0.0;
  Matrix q;     // SᵀS/‖SᵀS‖ − I/√C
  double ortho = 0.0;
};

MinCutTerms mincut_terms(const Matrix& a, const Matrix& s) {
  MinCutTerms t;
  t.num = trace(matmul_tn(s, matmul(a, s)));
  t.den = trace(matmul_tn(s, scale_rows(s, degrees(a))));
  t.cut = t.den > 0.0 ? -t.num / t.den : 0.0;
  t.gram = matmul_tn(s, s);
  t.gram_norm = frobenius_norm(t.gram);
  const double c = static_cast<double>(s.cols());
  t.q = t.gram * (1.0 / t.gram_norm) - Matrix::identity(s.cols()) * (1.0 / std::sqrt(c));
  t.ortho = frobenius_norm(t.q);
  return t;
}

Matrix mincut_coarse(const Matrix& a, const Matrix& s) {
  Matrix coarse = matmul_tn(s, matmul(a, s));
  for (std::size_t i = 0; i < coarse.rows(); ++i) coarse(i, i) = 0.0;
  const auto d = degrees(coarse);
  for (std::size_t i = 0; i < coarse.rows(); ++i) {
    for (std::size_t j = 0; j < coarse.cols(); ++j) {
      const double denom = std::sqrt(d[i]) * std::sqrt(d[j]);
      coarse(i, j) = denom > 0.0 ? coarse(i, j) / denom : 0.0;
    }
  }
  return coarse;
}

GraphContext dense_context(const Matrix& adjacency) {
  return {adjacency, normalized_adjacency(adjacency), {}};
}

void require_projector_input(const Matrix& tokens, const ProjectorParams& p) {
  p.validate();
  if (tokens.cols() != p.input_dim()) {
    throw DimensionError("projector expects width " + std::to_string(p.input_dim()) + ", got " +
                         std::to_string(tokens.cols()));
  }
}

Activation projector_activation(ProjectorVariant v) {
  return v == ProjectorVariant::bottleneck ? Activation::sigmoid : Activation::relu;
}

}  // namespace

AssignmentMatrix::AssignmentMatrix(Matrix s) : s_(std::move(s)) {
  for (std::size_t i = 0; i < s_.rows(); ++i) {
    double total = 0.0;
    for (double v : s_.row(i)) {
      if (v < 0.0) throw InvalidArgument("assignment entries must be nonnegative");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("assignment row " + std::to_string(i) + " does not sum to 1");
  }
}

void VirtualNodeBank::validate() const {
  if (h_vn.rows() == 0) throw DimensionError("virtual node bank needs at least one virtual node");
  if (h_vn.cols() != wq.rows() || wk.rows() != wv.rows() || wq.cols() != wk.cols()) {
    throw DimensionError("virtual node bank shapes disagree");
  }
}

VirtualNodeBank init_virtual_nodes(std::size_t k, std::size_t d, DeterministicRng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  VirtualNodeBank b;
  b.h_vn = uniform_matrix(k, d, 1.0, rng);
  b.wq = uniform_matrix(d, d, bound, rng);
  b.wk = uniform_matrix(d, d, bound, rng);
  b.wv = uniform_matrix(d, d, bound, rng);
  return b;
}

PoolResult mean_pool(const Matrix& h) {
  require_nonempty(h, "mean_pool");
  PoolResult r;
  r.tokens = column_means(h);
  return r;
}

PoolResult rand_k(const Matrix& h, std::size_t k, std::uint64_t seed) {
  require_nonempty(h, "rand_k");
  if (k < 1) throw InvalidArgument("rand_k needs k >= 1");
  DeterministicRng rng(seed);
  const std::size_t n = h.rows();
  std::vector<std::size_t> sel;
  if (n >= k) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    sel.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  } else {
    for (std::size_t i = 0; i < k; ++i) sel.push_back(rng.below(n));
  }
  PoolResult r;
  r.tokens = Matrix(k, h.cols());
  for (std::size_t t = 0; t < k; ++t) std::copy(h.row(sel[t]).begin(), h.row(sel[t]).end(), r.tokens.row(t).begin());
  r.selection = std::move(sel);
  return r;
}

PoolResult all_tokens(const Matrix& h) {
  require_nonempty(h, "all_tokens");
  PoolResult r;
  r.tokens = h;
  return r;
}

PoolResult topk_pool(const Matrix& h, const Matrix& projection, double rho) {
  require_nonempty(h, "topk_pool");
  require_rho(rho);
  return gated_selection(h, topk_scores(h, projection), rho);
}

PoolResult sag_pool(const Matrix& h, const Matrix& norm_adj, const EncoderParams& scorer, double rho) {
  require_nonempty(h, "sag_pool");
  require_rho(rho);
  return gated_selection(h, sag_scores(h, norm_adj, scorer), rho);
}

PoolResult diff_pool(const Matrix& h, const Matrix& adjacency, const EncoderParams& embed,
                     const EncoderParams& assign, std::size_t clusters) {
  require_nonempty(h, "diff_pool");
  require_square(adjacency, h.rows(), "diff_pool");
  const Matrix norm = normalized_adjacency(adjacency);
  const Matrix logits = gcn_forward(h, norm, assign);
  const std::size_t c = effective_clusters(clusters, h.rows(), logits.cols());
  const Matrix s = row_softmax(leading_columns(logits, c));
  const Matrix z = gcn_forward(h, norm, embed);

  PoolResult r;
  r.tokens = matmul_tn(s, z);
  r.coarse_adjacency = matmul_tn(s, matmul(adjacency, s));
  r.aux_losses[aux::lp] = link_prediction_loss(adjacency, s);
  r.aux_losses[aux::entropy] = assignment_entropy(s);
  r.assignment.emplace(s);
  r.clusters_reduced = c < clusters;
  return r;
}

PoolResult mincut_pool(const Matrix& h, const Matrix& adjacency, const EncoderParams& assign_mlp,
                       std::size_t clusters) {
  require_nonempty(h, "mincut_pool");
  require_square(adjacency, h.rows(), "mincut_pool");
  const Matrix logits = mlp_forward(h, assign_mlp);
  const std::size_t c = effective_clusters(clusters, h.rows(), logits.cols());
  const Matrix s = row_softmax(leading_columns(logits, c));
  const MinCutTerms t = mincut_terms(adjacency, s);

  PoolResult r;
  r.tokens = matmul_tn(s, h);
  r.coarse_adjacency = mincut_coarse(adjacency, s);
  r.aux_losses[aux::cut] = t.cut;
  r.aux_losses[aux::ortho] = t.ortho;
  r.assignment.emplace(s);
  r.clusters_reduced = c < clusters;
  return r;
}

PoolResult vn_pool(const Matrix& h, const VirtualNodeBank& bank) {
  require_nonempty(h, "vn_pool");
  bank.validate();
  if (h.cols() != bank.wk.rows() || h.cols() != bank.h_vn.cols()) {
    throw DimensionError("vn_pool: node width " + std::to_string(h.cols()) + " does not match the bank");
  }
  const std::size_t n = h.rows();
  const std::size_t k = bank.h_vn.rows();
  // Augmented node set: graph nodes first, then the virtual nodes.
  Matrix nodes(n + k, h.cols());
  for (std::size_t i = 0; i < n; ++i) std::copy(h.row(i).begin(), h.row(i).end(), nodes.row(i).begin());
  for (std::size_t v = 0; v < k; ++v) std::copy(bank.h_vn.row(v).begin(), bank.h_vn.row(v).end(), nodes.row(n + v).begin());

  const Matrix q = matmul(nodes, bank.wq);
  const Matrix keys = matmul(nodes, bank.wk);
  const Matrix values = matmul(nodes, bank.wv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(bank.wq.cols()));
  constexpr double closed = -std::numeric_limits<double>::infinity();

  PoolResult r;
  r.tokens = Matrix(k, values.cols());
  std::vector<double> logits(n + k);
  for (std::size_t v = 0; v < k; ++v) {
    const std::size_t row = n + v;
    // Only virtual→graph edges are open; graph↔graph and virtual↔virtual
    // message passing is suppressed.
    for (std::size_t j = 0; j < n + k; ++j) {
      if (j >= n) {
        logits[j] = closed;
        continue;
      }
      double acc = 0.0;
      for (std::size_t c = 0; c < q.cols(); ++c) acc += q(row, c) * keys(j, c);
      logits[j] = acc * scale;
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) {
      l = std::exp(l - mx);
      z += l;
    }
    for (std::size_t j = 0; j < n + k; ++j) {
      const double w = logits[j] / z;
      for (std::size_t c = 0; c < values.cols(); ++c) r.tokens(v, c) += w * values(j, c);
    }
  }
  return r;
}

Matrix perceiver_encode(const Matrix& latents, const Matrix& inputs, const Matrix& wq, const Matrix& wk,
                        const Matrix& wv) {
  if (latents.cols() != wq.rows() || inputs.cols() != wk.rows() || inputs.cols() != wv.rows() ||
      wq.cols() != wk.cols()) {
    throw DimensionError("perceiver_encode: projection widths do not match");
  }
  if (inputs.rows() == 0 || latents.rows() == 0) throw DimensionError("perceiver_encode: empty operand");
  const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
  const Matrix attn = row_softmax(matmul_nt(matmul(latents, wq), matmul(inputs, wk)) * scale);
  return matmul(attn, matmul(inputs, wv));
}

CrossAttentionGrads perceiver_encode_backward(const Matrix& latents, const Matrix& inputs, const Matrix& wq,
                                              const Matrix& wk, const Matrix& wv, const Matrix& grad_out) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(wq.cols()));
  const Matrix q = matmul(latents, wq);
  const Matrix k = matmul(inputs, wk);
  const Matrix v = matmul(inputs, wv);
  const Matrix attn = row_softmax(matmul_nt(q, k) * scale);

  const Matrix d_attn = matmul_nt(grad_out, v);
  const Matrix d_v = matmul_tn(attn, grad_out);
  const Matrix d_logits = row_softmax_backward(attn, d_attn) * scale;
  const Matrix d_q = matmul(d_logits, k);
  const Matrix d_k = matmul_tn(d_logits, q);

  CrossAttentionGrads g;
  g.latents = matmul_nt(d_q, wq);
  g.wq = matmul_tn(latents, d_q);
  g.inputs = matmul_nt(d_k, wk) + matmul_nt(d_v, wv);
  g.wk = matmul_tn(inputs, d_k);
  g.wv = matmul_tn(inputs, d_v);
  return g;
}

RetentionRatio calibrate_retention(std::size_t k, double n_avg) {
  if (k < 1) throw InvalidArgument("target token count must be at least 1");
  if (!(n_avg > 0.0)) throw InvalidArgument("average graph size must be positive");
  RetentionRatio r;
  r.value = std::min(1.0, static_cast<double>(k) / n_avg);
  r.rounded = std::round(r.value * 100.0) / 100.0;
  return r;
}

std::size_t retained_count(std::size_t n, double rho) {
  // The small slack keeps exact products like (2/3)·3 from rounding up.
  const auto kept = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(kept, 1, n);
}

std::string_view to_string(ProjectorVariant v) noexcept {
  return v == ProjectorVariant::bottleneck ? "bottleneck" : "vn";
}

ProjectorVariant projector_variant_from_string(std::string_view name) {
  if (name == "bottleneck") return ProjectorVariant::bottleneck;
  if (name == "vn") return ProjectorVariant::vn;
  throw InvalidArgument("unknown projector variant \"" + std::string(name) + "\"");
}

void ProjectorParams::validate() const {
  if (first.w.cols() != first.b.cols() || first.b.rows() != 1 || second.w.rows() != first.w.cols() ||
      second.w.cols() != second.b.cols() || second.b.rows() != 1) {
    throw DimensionError("projector layer shapes do not chain");
  }
}

ProjectorParams init_projector(ProjectorVariant v, std::size_t d_in, std::size_t d_llm, DeterministicRng& rng,
                               std::size_t d_mid) {
  if (d_mid == 0) d_mid = v == ProjectorVariant::bottleneck ? std::max<std::size_t>(1, d_llm / 2) : d_llm;
  ProjectorParams p;
  p.variant = v;
  p.first = {uniform_matrix(d_in, d_mid, 1.0 / std::sqrt(static_cast<double>(d_in)), rng), Matrix(1, d_mid)};
  p.second = {uniform_matrix(d_mid, d_llm, 1.0 / std::sqrt(static_cast<double>(d_mid)), rng), Matrix(1, d_llm)};
  return p;
}

Matrix project_tokens(const Matrix& tokens, const ProjectorParams& p) {
  require_projector_input(tokens, p);
  const Matrix mid = activation(add_row(matmul(tokens, p.first.w), p.first.b), projector_activation(p.variant));
  return add_row(matmul(mid, p.second.w), p.second.b);
}

ProjectorGrads project_tokens_backward(const Matrix& tokens, const ProjectorParams& p, const Matrix& grad_out) {
  require_projector_input(tokens, p);
  const Activation act = projector_activation(p.variant);
  const Matrix mid = activation(add_row(matmul(tokens, p.first.w), p.first.b), act);
  ProjectorGrads g;
  g.params.variant = p.variant;
  g.params.second = {matmul_tn(mid, grad_out), column_sums(grad_out)};
  const Matrix d_pre = activation_backward(mid, matmul_nt(grad_out, p.second.w), act);
  g.params.first = {matmul_tn(tokens, d_pre), column_sums(d_pre)};
  g.input = matmul_nt(d_pre, p.first.w);
  return g;
}

std::string_view to_string(PoolOperator op) noexcept {
  switch (op) {
    case PoolOperator::mean: return "mean";
    case PoolOperator::randk: return "randk";
    case PoolOperator::all: return "all";
    case PoolOperator::topk: return "topk";
    case PoolOperator::sag: return "sag";
    case PoolOperator::diff: return "diff";
    case PoolOperator::mincut: return "mincut";
    case PoolOperator::vn: return "vn";
  }
  return "?";
}

PoolOperator pool_operator_from_string(std::string_view name) {
  for (PoolOperator op : kAllOperators) {
    if (to_string(op) == name) return op;
  }
  throw InvalidArgument("unknown pooling operator \"" + std::string(name) + "\"");
}

PoolingParams init_pooling(PoolOperator op, std::size_t d, const PoolSettings& s, DeterministicRng& rng) {
  PoolingParams p;
  p.op = op;
  EncoderShape shape;
  shape.input_dim = d;
  shape.hidden_dim = d;
  shape.layers = s.assign_layers;
  switch (op) {
    case PoolOperator::mean:
    case PoolOperator::randk:
    case PoolOperator::all:
      break;
    case PoolOperator::topk:
      p.projection = uniform_matrix(d, 1, 1.0 / std::sqrt(static_cast<double>(d)), rng);
      break;
    case PoolOperator::sag:
      shape.output_dim = 1;
      shape.layers = 1;
      p.scorer = init_encoder(EncoderKind::gcn, shape, rng);
      break;
    case PoolOperator::diff:
      shape.output_dim = d;
      shape.layers = 1;
      p.embed = init_encoder(EncoderKind::gcn, shape, rng);
      shape.output_dim = s.clusters;
      shape.layers = s.assign_layers;
      p.assign = init_encoder(EncoderKind::gcn, shape, rng);
      break;
    case PoolOperator::mincut:
      shape.output_dim = s.clusters;
      p.assign = init_encoder(EncoderKind::mlp, shape, rng);
      break;
    case PoolOperator::vn:
      p.bank = init_virtual_nodes(s.k, d, rng);
      break;
  }
  return p;
}

void for_each_param(PoolingParams& p, const std::string& prefix, const ParamVisitor& fn) {
  switch (p.op) {
    case PoolOperator::mean:
    case PoolOperator::randk:
    case PoolOperator::all:
      break;
    case PoolOperator::topk: fn(prefix + "projection", p.projection); break;
    case PoolOperator::sag: for_each_param(p.scorer, prefix + "scorer.", fn); break;
    case PoolOperator::diff:
      for_each_param(p.embed, prefix + "embed.", fn);
      for_each_param(p.assign, prefix + "assign.", fn);
      break;
    case PoolOperator::mincut: for_each_param(p.assign, prefix + "assign.", fn); break;
    case PoolOperator::vn:
      fn(prefix + "h_vn", p.bank.h_vn);
      fn(prefix + "wq", p.bank.wq);
      fn(prefix + "wk", p.bank.wk);
      fn(prefix + "wv", p.bank.wv);
      break;
  }
}

void for_each_param(const PoolingParams& p, const std::string& prefix, const ConstParamVisitor& fn) {
  for_each_param(const_cast<PoolingParams&>(p), prefix, [&](const std::string& name, Matrix& m) { fn(name, m); });
}

PoolingParams zeros_like(const PoolingParams& p) {
  PoolingParams z = p;
  for_each_param(z, "", [](const std::string&, Matrix& m) { m *= 0.0; });
  return z;
}

PoolResult pool_forward(const Matrix& h, const GraphContext& ctx, const PoolingParams& p, const PoolSettings& s) {
  switch (p.op) {
    case PoolOperator::mean: return mean_pool(h);
    case PoolOperator::randk: return rand_k(h, s.k, s.seed);
    case PoolOperator::all: return all_tokens(h);
    case PoolOperator::topk: return topk_pool(h, p.projection, s.rho);
    case PoolOperator::sag: return sag_pool(h, ctx.normalized, p.scorer, s.rho);
    case PoolOperator::diff: return diff_pool(h, ctx.adjacency, p.embed, p.assign, s.clusters);
    case PoolOperator::mincut: return mincut_pool(h, ctx.adjacency, p.assign, s.clusters);
    case PoolOperator::vn: return vn_pool(h, p.bank);
  }
  throw InvalidArgument("unknown pooling operator");
}

PoolGrads pool_backward(const Matrix& h, const GraphContext& ctx, const PoolingParams& p, const PoolSettings& s,
                        const PoolUpstream& up) {
  PoolGrads g{Matrix(h.rows(), h.cols()), zeros_like(p)};
  const Matrix& dt = up.tokens;
  switch (p.op) {
    case PoolOperator::mean: {
      require_nonempty(h, "mean_pool");
      const double inv = 1.0 / static_cast<double>(h.rows());
      for (std::size_t i = 0; i < h.rows(); ++i)
        for (std::size_t c = 0; c < h.cols(); ++c) g.input(i, c) = dt(0, c) * inv;
      break;
    }
    case PoolOperator::randk: {
      const auto sel = *rand_k(h, s.k, s.seed).selection;
      for (std::size_t t = 0; t < sel.size(); ++t)
        for (std::size_t c = 0; c < h.cols(); ++c) g.input(sel[t], c) += dt(t, c);
      break;
    }
    case PoolOperator::all:
      g.input = dt;
      break;
    case PoolOperator::topk: {
      require_rho(s.rho);
      const auto scores = topk_scores(h, p.projection);
      const auto sel = select_top(h, scores, retained_count(h.rows(), s.rho));
      auto [dh, dy] = gated_selection_backward(h, scores, sel, dt);
      // y = H u, u = p/‖p‖.
      const double norm = frobenius_norm(p.projection);
      const Matrix u = p.projection * (1.0 / norm);
      const Matrix dy_col = Matrix::column_vector(dy);
      dh += matmul_nt(dy_col, u);
      const Matrix du = matmul_tn(h, dy_col);
      const double radial = frobenius_dot(u, du);
      g.params.projection = (du - u * radial) * (1.0 / norm);
      g.input = std::move(dh);
      break;
    }
    case PoolOperator::sag: {
      require_rho(s.rho);
      const auto scores = sag_scores(h, ctx.normalized, p.scorer);
      const auto sel = select_top(h, scores, retained_count(h.rows(), s.rho));
      auto [dh, dy] = gated_selection_backward(h, scores, sel, dt);
      EncoderGrads sg = encoder_backward(h, ctx, p.scorer, Matrix::column_vector(dy));
      g.input = dh + sg.input;
      g.params.scorer = std::move(sg.params);
      break;
    }
    case PoolOperator::diff: {
      require_square(ctx.adjacency, h.rows(), "diff_pool");
      const GraphContext dc = dense_context(ctx.adjacency);
      const Matrix logits = gcn_forward(h, dc.normalized, p.assign);
      const std::size_t c = effective_clusters(s.clusters, h.rows(), logits.cols());
      const Matrix sm = row_softmax(leading_columns(logits, c));
      const Matrix z = gcn_forward(h, dc.normalized, p.embed);
      const double n = static_cast<double>(h.rows());

      Matrix ds = matmul_nt(z, dt);
      const Matrix dz = matmul(sm, dt);
      if (const double w = aux_weight(up, aux::lp); w != 0.0) {
        const Matrix r = ctx.adjacency - matmul_nt(sm, sm);
        const double rn = frobenius_norm(r);
        if (rn > 0.0) ds -= matmul(r + transpose(r), sm) * (w / (rn * n * n));
      }
      if (const double w = aux_weight(up, aux::entropy); w != 0.0) {
        for (std::size_t i = 0; i < sm.size(); ++i) {
          const double v = sm.data()[i];
          if (!entropy_clamped(v)) ds.data()[i] += w / n * (-std::log(v + kEntropyEps) - v / (v + kEntropyEps));
        }
      }
      const Matrix dlogits = pad_columns(row_softmax_backward(sm, ds), logits.cols());
      EncoderGrads ga = encoder_backward(h, dc, p.assign, dlogits);
      EncoderGrads ge = encoder_backward(h, dc, p.embed, dz);
      g.input = ga.input + ge.input;
      g.params.assign = std::move(ga.params);
      g.params.embed = std::move(ge.params);
      break;
    }
    case PoolOperator::mincut: {
      require_square(ctx.adjacency, h.rows(), "mincut_pool");
      const Matrix logits = mlp_forward(h, p.assign);
      const std::size_t c = effective_clusters(s.clusters, h.rows(), logits.cols());
      const Matrix sm = row_softmax(leading_columns(logits, c));
      const MinCutTerms t = mincut_terms(ctx.adjacency, sm);

      Matrix ds = matmul_nt(h, dt);
      Matrix dh = matmul(sm, dt);
      if (const double w = aux_weight(up, aux::cut); w != 0.0 && t.den > 0.0) {
        const Matrix d_num = matmul(ctx.adjacency + transpose(ctx.adjacency), sm);
        const Matrix d_den = scale_rows(sm, degrees(ctx.adjacency)) * 2.0;
        ds -= (d_num * t.den - d_den * t.num) * (w / (t.den * t.den));
      }
      if (const double w = aux_weight(up, aux::ortho); w != 0.0 && t.ortho > 0.0) {
        const Matrix gq = t.q * (1.0 / t.ortho);
        const double m = t.gram_norm;
        const Matrix gm = gq * (1.0 / m) - t.gram * (frobenius_dot(gq, t.gram) / (m * m * m));
        ds += matmul(sm, gm + transpose(gm)) * w;
      }
      const Matrix dlogits = pad_columns(row_softmax_backward(sm, ds), logits.cols());
      EncoderGrads ga = encoder_backward(h, ctx, p.assign, dlogits);
      g.input = dh + ga.input;
      g.params.assign = std::move(ga.params);
      break;
    }
    case PoolOperator::vn: {
      CrossAttentionGrads cg = perceiver_encode_backward(p.bank.h_vn, h, p.bank.wq, p.bank.wk, p.bank.wv, dt);
      g.input = std::move(cg.inputs);
      g.params.bank = {std::move(cg.latents), std::move(cg.wq), std::move(cg.wk), std::move(cg.wv)};
      break;
    }
  }
  return g;
}

}  // namespace gpool
