#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gpool/dataset.hpp"
#include "gpool/encoders.hpp"
#include "gpool/pooling.hpp"

namespace gpool {

enum class Regime { frozen, adapted };
std::string_view to_string(Regime r) noexcept;
Regime regime_from_string(std::string_view name);

/// Low-rank delta B·A scaled by scale/rank.
struct Adapter {
  Matrix b;  // d_llm×r
  Matrix a;  // r×classes
  double scale = 8.0;

  std::size_t rank() const noexcept { return b.cols(); }
};

/// Frozen readout W0 (d_llm×classes) with an optional trainable adapter.
struct ReadoutParams {
  Matrix w0;
  std::optional<Adapter> adapter;

  // W0 + (scale/r)·B·A, or W0 alone.
  Matrix effective() const;
};

/// logits (1×classes) = mean over token rows · effective readout.
Matrix surrogate_readout(const Matrix& tokens, const ReadoutParams& p);

struct ReadoutGrads {
  Matrix tokens;
  Matrix b;  // empty without adapter
  Matrix a;
};
ReadoutGrads surrogate_readout_backward(const Matrix& tokens, const ReadoutParams& p, const Matrix& grad_logits);

/// One experiment: encoder → pooling → projector → surrogate readout.
struct RunConfig {
  EncoderKind encoder = EncoderKind::gcn;
  std::size_t encoder_layers = 2;
  std::size_t hidden = 16;
  std::size_t attention_layers = 2;
  double alpha = 0.5;

  PoolOperator op = PoolOperator::mean;
  std::size_t k = 8;
  std::size_t clusters = 8;
  std::optional<double> rho;  // calibrated from k and the mean graph size when absent
  std::optional<ProjectorVariant> projector;
  std::size_t assign_layers = 1;

  Regime regime = Regime::adapted;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  std::size_t epochs = 10;
  double lr = 0.05;
  double lambda = 1.0;
  std::map<std::string, double> lambda_overrides;
  std::size_t d_llm = 32;
  std::size_t rank = 4;
  double scale = 8.0;

  // vn projector for the vn operator, bottleneck otherwise, unless set.
  ProjectorVariant projector_variant() const noexcept;
  double aux_weight(const std::string& name) const;
  void validate() const;
};

// Unknown keys are rejected. Pooling keys follow the pooling config schema
// {"operator","k","clusters","rho","projector","assign_layers"}.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& c);
// Applies a pooling config object onto `c`.
void apply_pooling_json(const nlohmann::json& j, RunConfig& c);

struct PipelineParams {
  EncoderParams encoder;
  PoolingParams pooling;
  ProjectorParams projector;
  ReadoutParams readout;
};

struct PipelineDims {
  std::size_t input_dim = 0;
  std::size_t edge_dim = 0;
  std::size_t classes = 2;
};

PipelineParams init_pipeline(const RunConfig& c, const PipelineDims& dims, std::uint64_t seed);

/// Trainable blocks for the regime, in a fixed order. W0 is never listed.
std::vector<std::pair<std::string, Matrix*>> trainable_blocks(PipelineParams& p, Regime regime);

/// An example with its graph context precomputed.
struct PreparedExample {
  const Example* example = nullptr;
  GraphContext ctx;
  std::size_t index = 0;
};
std::vector<PreparedExample> prepare(const std::vector<Example>& data);

struct PipelineSettings {
  PoolSettings pool;
  std::uint64_t seed = 0;  // per-run seed, mixed with the example index for rand_k
};
PipelineSettings pipeline_settings(const RunConfig& c, double rho, std::uint64_t seed);

struct ForwardResult {
  double loss = 0.0;
  double cross_entropy = 0.0;
  std::map<std::string, double> aux_losses;
  Matrix logits;
  std::size_t prediction = 0;
};

ForwardResult pipeline_forward(const RunConfig& c, const PipelineParams& p, const PipelineSettings& s,
                               const PreparedExample& ex);

struct BackwardResult {
  ForwardResult forward;
  PipelineParams grads;  // same structure as the params
};
BackwardResult pipeline_backward(const RunConfig& c, const PipelineParams& p, const PipelineSettings& s,
                                 const PreparedExample& ex);

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<double> loss;      // epochs + 1 entries: before each update, then final
  std::vector<double> accuracy;  // same indexing as loss
  double final_accuracy = 0.0;
  std::uint64_t w0_checksum_before = 0;
  std::uint64_t w0_checksum_after = 0;
};

struct RunReport {
  std::string op;
  std::string encoder;
  Regime regime = Regime::adapted;
  std::vector<SeedRun> runs;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation of final accuracies
};

struct TrainOptions {
  bool parallel = true;  // data-parallel gradient accumulation over examples
};

struct SeedResult {
  SeedRun run;
  PipelineParams params;
};

/// Full-batch gradient descent on mean(cross-entropy + Σ λ·aux).
/// Throws NumericalError naming the operator and step on a non-finite loss.
SeedResult train_seed(const RunConfig& c, const std::vector<Example>& data, std::uint64_t seed,
                      const TrainOptions& opt = {});
RunReport train(const RunConfig& c, const std::vector<Example>& data, const TrainOptions& opt = {});

/// FNV-1a over the bytes of the matrix entries.
std::uint64_t checksum(const Matrix& m) noexcept;

nlohmann::json run_report_to_json(const RunReport& r);
RunReport run_report_from_json(const nlohmann::json& j);
std::string run_report_csv(const RunReport& r);

struct BlockCheck {
  std::string name;
  std::size_t size = 0;
  double rel_err = 0.0;
};

struct GradcheckReport {
  std::vector<BlockCheck> blocks;
  double max_rel_err = 0.0;
  std::string worst_block;
  bool pass = false;
};

/// Hook applied to the analytic gradients before comparison (test fixture).
using GradientTamper = std::function<void(const std::string& block, Matrix& grad)>;

inline constexpr double kGradcheckThreshold = 1e-5;
inline constexpr std::size_t kGradcheckMaxNodes = 8;

/// Central-difference check of every trainable block on one example. The
/// adapter's B starts nonzero here so that A's gradient is exercised.
GradcheckReport gradcheck(const RunConfig& c, const Example& sample, std::uint64_t seed,
                          const GradientTamper& tamper = {}, double h = 1e-5);

/// A deterministic graph of at most kGradcheckMaxNodes nodes.
Example gradcheck_sample(std::uint64_t seed = 1);

/// Every operator × encoder combination, named "<operator>-<encoder>".
std::vector<std::pair<std::string, RunConfig>> named_configs();

struct StabilityRow {
  std::string op;
  Regime regime = Regime::adapted;
  double mean = 0.0;
  double std = 0.0;
  std::size_t runs = 0;
};

struct StabilityTable {
  std::vector<StabilityRow> rows;  // sorted by operator, frozen before adapted
  // var(adapted) / var(frozen) per operator; nullopt when undefined.
  std::map<std::string, std::optional<double>> variance_ratio;
};

StabilityTable stability_report(const std::vector<RunReport>& reports);
std::string stability_table_text(const StabilityTable& t);
std::string stability_table_csv(const StabilityTable& t);
nlohmann::json stability_table_json(const StabilityTable& t);

}  // namespace gpool
