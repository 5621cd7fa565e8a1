#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gpool/encoders.hpp"
#include "gpool/numerics.hpp"

namespace gpool {

/// Row-stochastic N×C soft cluster map.
class AssignmentMatrix {
 public:
  // Throws InvalidArgument unless entries are ≥ 0 and rows sum to 1 ± 1e-9.
  explicit AssignmentMatrix(Matrix s);

  const Matrix& matrix() const noexcept { return s_; }
  std::size_t nodes() const noexcept { return s_.rows(); }
  std::size_t clusters() const noexcept { return s_.cols(); }

 private:
  Matrix s_;
};

/// Auxiliary loss names as they appear in PoolResult::aux_losses.
namespace aux {
inline constexpr const char* lp = "lp";
inline constexpr const char* entropy = "entropy";
inline constexpr const char* cut = "cut";
inline constexpr const char* ortho = "ortho";
}  // namespace aux

struct PoolResult {
  Matrix tokens;                              // K×d_out
  std::map<std::string, double> aux_losses;   // absent key = not applicable
  std::optional<std::vector<std::size_t>> selection;
  std::optional<AssignmentMatrix> assignment;
  std::optional<Matrix> coarse_adjacency;     // C×C
  bool clusters_reduced = false;              // C was cut down to N

  std::size_t token_count() const noexcept { return tokens.rows(); }
};

/// Learnable virtual nodes H_vn (K×d) and the shared attention projections.
struct VirtualNodeBank {
  Matrix h_vn;
  Matrix wq;
  Matrix wk;
  Matrix wv;

  void validate() const;
};

VirtualNodeBank init_virtual_nodes(std::size_t k, std::size_t d, DeterministicRng& rng);

// ---- baselines --------------------------------------------------------

PoolResult mean_pool(const Matrix& h);
/// k rows without replacement (partial Fisher-Yates on the seeded stream);
/// with replacement when N < k.
PoolResult rand_k(const Matrix& h, std::size_t k, std::uint64_t seed);
PoolResult all_tokens(const Matrix& h);

// ---- pruning ----------------------------------------------------------

/// Keeps the ⌈ρN⌉ highest scores y = H p/‖p‖ (ties to the larger feature row, then the lower index),
/// emitting H_i ⊙ tanh(y_i) in descending score order.
PoolResult topk_pool(const Matrix& h, const Matrix& projection, double rho);
/// Same selection and gating with scores from a one-output GCN scorer.
PoolResult sag_pool(const Matrix& h, const Matrix& norm_adj, const EncoderParams& scorer, double rho);

// ---- clustering -------------------------------------------------------

/// S = softmax(GCN_assign(H, Â)), Z = GCN_embed(H, Â), tokens SᵀZ, coarse
/// adjacency SᵀAS. lp = ‖A − SSᵀ‖_F / N², entropy = (1/N) Σ −S ln(S + 1e-12).
PoolResult diff_pool(const Matrix& h, const Matrix& adjacency, const EncoderParams& embed,
                     const EncoderParams& assign, std::size_t clusters);
/// S = softmax(MLP(H)), tokens SᵀH, cut = −Tr(SᵀAS)/Tr(SᵀDS),
/// ortho = ‖SᵀS/‖SᵀS‖_F − I/√C‖_F. The coarse adjacency is SᵀAS with a
/// zeroed diagonal, symmetrically degree-normalized.
PoolResult mincut_pool(const Matrix& h, const Matrix& adjacency, const EncoderParams& assign_mlp,
                       std::size_t clusters);

// ---- virtual nodes ----------------------------------------------------

/// Virtual nodes attached to every graph node of an augmented graph; one
/// masked attention layer in which only virtual→graph edges are open. The
/// virtual-node rows of the result are the tokens.
PoolResult vn_pool(const Matrix& h, const VirtualNodeBank& bank);

/// softmax((X_lat W_Q)(X_inp W_K)ᵀ/√d)(X_inp W_V), d = key width.
Matrix perceiver_encode(const Matrix& latents, const Matrix& inputs, const Matrix& wq, const Matrix& wk,
                        const Matrix& wv);

struct CrossAttentionGrads {
  Matrix latents, inputs, wq, wk, wv;
};
CrossAttentionGrads perceiver_encode_backward(const Matrix& latents, const Matrix& inputs, const Matrix& wq,
                                              const Matrix& wk, const Matrix& wv, const Matrix& grad_out);

// ---- retention --------------------------------------------------------

struct RetentionRatio {
  double value = 1.0;    // min(1, k / n_avg)
  double rounded = 1.0;  // two decimals, for config echo
};
RetentionRatio calibrate_retention(std::size_t k, double n_avg);

// ⌈ρN⌉ clamped to [1, N].
std::size_t retained_count(std::size_t n, double rho);

// ---- projector --------------------------------------------------------

enum class ProjectorVariant { bottleneck, vn };
std::string_view to_string(ProjectorVariant v) noexcept;
ProjectorVariant projector_variant_from_string(std::string_view name);

/// bottleneck: sigmoid(T W1 + b1) W2 + b2, mid width d_mid.
/// vn:         relu(T W1 + b1) W2 + b2, mid width d_llm.
struct ProjectorParams {
  ProjectorVariant variant = ProjectorVariant::bottleneck;
  DenseLayer first;
  DenseLayer second;

  std::size_t input_dim() const noexcept { return first.w.rows(); }
  std::size_t output_dim() const noexcept { return second.w.cols(); }
  void validate() const;
};

// d_mid defaults to d_llm / 2 for the bottleneck variant.
ProjectorParams init_projector(ProjectorVariant v, std::size_t d_in, std::size_t d_llm, DeterministicRng& rng,
                               std::size_t d_mid = 0);
Matrix project_tokens(const Matrix& tokens, const ProjectorParams& p);

struct ProjectorGrads {
  Matrix input;
  ProjectorParams params;
};
ProjectorGrads project_tokens_backward(const Matrix& tokens, const ProjectorParams& p, const Matrix& grad_out);

// ---- generic dispatch (used by the training harness) -------------------

enum class PoolOperator { mean, randk, all, topk, sag, diff, mincut, vn };
std::string_view to_string(PoolOperator op) noexcept;
PoolOperator pool_operator_from_string(std::string_view name);
inline constexpr PoolOperator kAllOperators[] = {PoolOperator::mean, PoolOperator::randk, PoolOperator::all,
                                                 PoolOperator::topk, PoolOperator::sag,   PoolOperator::diff,
                                                 PoolOperator::mincut, PoolOperator::vn};

/// Learnables of one pooling operator; members not used by `op` stay empty.
struct PoolingParams {
  PoolOperator op = PoolOperator::mean;
  Matrix projection;     // topk: d×1
  EncoderParams scorer;  // sag: GCN d→1
  EncoderParams embed;   // diff
  EncoderParams assign;  // diff: GCN d→C; mincut: MLP d→C
  VirtualNodeBank bank;  // vn
};

struct PoolSettings {
  std::size_t k = 8;          // randk / vn token count
  std::size_t clusters = 8;   // diff / mincut
  double rho = 1.0;           // topk / sag
  std::uint64_t seed = 0;     // randk
  std::size_t assign_layers = 1;
};

PoolingParams init_pooling(PoolOperator op, std::size_t d, const PoolSettings& s, DeterministicRng& rng);
PoolingParams zeros_like(const PoolingParams& p);
void for_each_param(PoolingParams& p, const std::string& prefix, const ParamVisitor& fn);
void for_each_param(const PoolingParams& p, const std::string& prefix, const ConstParamVisitor& fn);

PoolResult pool_forward(const Matrix& h, const GraphContext& ctx, const PoolingParams& p, const PoolSettings& s);

/// Upstream gradients: w.r.t. the tokens and the weight of each aux loss.
struct PoolUpstream {
  Matrix tokens;
  std::map<std::string, double> aux;
};

struct PoolGrads {
  Matrix input;
  PoolingParams params;
};

/// Gradient of ⟨up.tokens, tokens⟩ + Σ up.aux[name]·aux_losses[name].
/// Pruning selections are held fixed (piecewise-differentiable).
PoolGrads pool_backward(const Matrix& h, const GraphContext& ctx, const PoolingParams& p, const PoolSettings& s,
                        const PoolUpstream& up);

}  // namespace gpool
