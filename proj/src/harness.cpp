#include "gpool/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

#include "gpool/graph_io.hpp"

namespace gpool {
namespace {

using nlohmann::json;

constexpr std::uint64_t kAdapterStream = 0xADA;
constexpr std::uint64_t kGradcheckStream = 0x6C;

double mean_of(const std::vector<double>& v) {
  // Identical values return exactly that value (a plain sum can drift).
  if (!v.empty() && std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end()) return v.front();
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

std::size_t argmax_row(const Matrix& logits) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < logits.cols(); ++j)
    if (logits(0, j) > logits(0, best)) best = j;
  return best;
}

PipelineDims dims_of(const std::vector<Example>& data) {
  if (data.empty()) throw InvalidArgument("dataset is empty");
  PipelineDims d;
  d.input_dim = data.front().graph.feature_dim();
  std::size_t max_label = 0;
  for (const auto& ex : data) {
    if (ex.graph.feature_dim() != d.input_dim) throw DimensionError("dataset graphs disagree on feature width");
    if (ex.graph.node_count() == 0) throw InvalidArgument("example " + ex.id + " has no nodes");
    d.edge_dim = std::max(d.edge_dim, ex.graph.edge_feature_dim());
    max_label = std::max(max_label, ex.label);
  }
  d.classes = std::max<std::size_t>(2, max_label + 1);
  return d;
}

double mean_graph_size(const std::vector<Example>& data) {
  double s = 0.0;
  for (const auto& ex : data) s += static_cast<double>(ex.graph.node_count());
  return s / static_cast<double>(data.size());
}

double resolve_rho(const RunConfig& c, double n_avg) {
  return c.rho ? *c.rho : calibrate_retention(c.k, n_avg).value;
}

void add_into(PipelineParams& total, PipelineParams& part, Regime regime) {
  auto dst = trainable_blocks(total, regime);
  auto src = trainable_blocks(part, regime);
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i].second += *src[i].second;
}

PipelineParams zero_grads(const PipelineParams& p) {
  PipelineParams z = p;
  z.encoder = zeros_like(p.encoder);
  z.pooling = zeros_like(p.pooling);
  z.projector.first.w *= 0.0;
  z.projector.first.b *= 0.0;
  z.projector.second.w *= 0.0;
  z.projector.second.b *= 0.0;
  z.readout.w0 *= 0.0;
  if (z.readout.adapter) {
    z.readout.adapter->a *= 0.0;
    z.readout.adapter->b *= 0.0;
  }
  return z;
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw InvalidArgument(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw InvalidArgument(where + ": unknown key \"" + key + "\"");
  }
}

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

}  // namespace

std::string_view to_string(Regime r) noexcept { return r == Regime::frozen ? "frozen" : "adapted"; }

Regime regime_from_string(std::string_view name) {
  if (name == "frozen") return Regime::frozen;
  if (name == "adapted") return Regime::adapted;
  throw InvalidArgument("unknown regime \"" + std::string(name) + "\"");
}

Matrix ReadoutParams::effective() const {
  if (!adapter) return w0;
  const double s = adapter->scale / static_cast<double>(adapter->rank());
  return w0 + matmul(adapter->b, adapter->a) * s;
}

Matrix surrogate_readout(const Matrix& tokens, const ReadoutParams& p) {
  if (tokens.rows() == 0) throw DimensionError("readout needs at least one token");
  if (tokens.cols() != p.w0.rows()) {
    throw DimensionError("readout expects token width " + std::to_string(p.w0.rows()) + ", got " +
                         std::to_string(tokens.cols()));
  }
  return matmul(column_means(tokens), p.effective());
}

ReadoutGrads surrogate_readout_backward(const Matrix& tokens, const ReadoutParams& p, const Matrix& grad_logits) {
  const Matrix m = column_means(tokens);
  const Matrix w = p.effective();
  ReadoutGrads g;
  const Matrix dm = matmul_nt(grad_logits, w);
  g.tokens = Matrix(tokens.rows(), tokens.cols());
  const double inv = 1.0 / static_cast<double>(tokens.rows());
  for (std::size_t i = 0; i < tokens.rows(); ++i)
    for (std::size_t c = 0; c < tokens.cols(); ++c) g.tokens(i, c) = dm(0, c) * inv;
  if (p.adapter) {
    const double s = p.adapter->scale / static_cast<double>(p.adapter->rank());
    const Matrix dw = matmul_tn(m, grad_logits);
    g.b = matmul_nt(dw, p.adapter->a) * s;
    g.a = matmul_tn(p.adapter->b, dw) * s;
  }
  return g;
}

ProjectorVariant RunConfig::projector_variant() const noexcept {
  if (projector) return *projector;
  return op == PoolOperator::vn ? ProjectorVariant::vn : ProjectorVariant::bottleneck;
}

double RunConfig::aux_weight(const std::string& name) const {
  auto it = lambda_overrides.find(name);
  return it == lambda_overrides.end() ? lambda : it->second;
}

void RunConfig::validate() const {
  if (encoder_layers < 1 || hidden < 1 || attention_layers < 1) throw InvalidArgument("encoder sizes must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  if (k < 1 || clusters < 1) throw InvalidArgument("k and clusters must be at least 1");
  if (rho && !(*rho > 0.0 && *rho <= 1.0)) throw InvalidArgument("rho must lie in (0, 1]");
  if (seeds.empty()) throw InvalidArgument("at least one seed is required");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("lr must be finite and nonnegative");
  if (d_llm < 1 || rank < 1) throw InvalidArgument("d_llm and rank must be positive");
  if (!std::isfinite(scale) || !std::isfinite(lambda)) throw InvalidArgument("scale and lambda must be finite");
  static const std::set<std::string> aux_names = {aux::lp, aux::entropy, aux::cut, aux::ortho};
  for (const auto& [name, _] : lambda_overrides) {
    if (!aux_names.contains(name)) throw InvalidArgument("unknown aux loss \"" + name + "\"");
  }
}

void apply_pooling_json(const json& j, RunConfig& c) {
  reject_unknown(j, {"operator", "k", "clusters", "rho", "projector", "assign_layers"}, "pooling config");
  if (auto it = j.find("operator"); it != j.end()) c.op = pool_operator_from_string(it->get<std::string>());
  take(j, "k", c.k);
  take(j, "clusters", c.clusters);
  if (auto it = j.find("rho"); it != j.end() && !it->is_null()) c.rho = it->get<double>();
  if (auto it = j.find("projector"); it != j.end() && !it->is_null()) {
    c.projector = projector_variant_from_string(it->get<std::string>());
  }
  take(j, "assign_layers", c.assign_layers);
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"encoder", "pooling", "regime", "seeds", "epochs", "lr", "lambda", "d_llm", "rank", "scale"},
                 "run config");
  RunConfig c;
  try {
    if (auto it = j.find("encoder"); it != j.end()) {
      reject_unknown(*it, {"kind", "layers", "hidden", "attention_layers", "alpha"}, "encoder config");
      if (auto k = it->find("kind"); k != it->end()) c.encoder = encoder_kind_from_string(k->get<std::string>());
      take(*it, "layers", c.encoder_layers);
      take(*it, "hidden", c.hidden);
      take(*it, "attention_layers", c.attention_layers);
      take(*it, "alpha", c.alpha);
    }
    if (auto it = j.find("pooling"); it != j.end()) apply_pooling_json(*it, c);
    if (auto it = j.find("regime"); it != j.end()) c.regime = regime_from_string(it->get<std::string>());
    take(j, "seeds", c.seeds);
    take(j, "epochs", c.epochs);
    take(j, "lr", c.lr);
    if (auto it = j.find("lambda"); it != j.end()) {
      if (it->is_number()) {
        c.lambda = it->get<double>();
      } else {
        for (const auto& [name, value] : it->items()) {
          if (name == "default") c.lambda = value.get<double>();
          else c.lambda_overrides[name] = value.get<double>();
        }
      }
    }
    take(j, "d_llm", c.d_llm);
    take(j, "rank", c.rank);
    take(j, "scale", c.scale);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json pooling = {{"operator", std::string(to_string(c.op))},
                  {"k", c.k},
                  {"clusters", c.clusters},
                  {"projector", std::string(to_string(c.projector_variant()))},
                  {"assign_layers", c.assign_layers}};
  if (c.rho) pooling["rho"] = *c.rho;
  json lambda = {{"default", c.lambda}};
  for (const auto& [name, v] : c.lambda_overrides) lambda[name] = v;
  return {{"encoder",
           {{"kind", std::string(to_string(c.encoder))},
            {"layers", c.encoder_layers},
            {"hidden", c.hidden},
            {"attention_layers", c.attention_layers},
            {"alpha", c.alpha}}},
          {"pooling", pooling},
          {"regime", std::string(to_string(c.regime))},
          {"seeds", c.seeds},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"lambda", lambda},
          {"d_llm", c.d_llm},
          {"rank", c.rank},
          {"scale", c.scale}};
}

PipelineParams init_pipeline(const RunConfig& c, const PipelineDims& dims, std::uint64_t seed) {
  c.validate();
  DeterministicRng rng(seed);
  PipelineParams p;
  EncoderShape shape;
  shape.input_dim = dims.input_dim;
  shape.hidden_dim = c.hidden;
  shape.output_dim = c.hidden;
  shape.layers = c.encoder_layers;
  shape.attention_layers = c.attention_layers;
  shape.edge_dim = dims.edge_dim;
  shape.alpha = c.alpha;
  p.encoder = init_encoder(c.encoder, shape, rng);

  PoolSettings ps;
  ps.k = c.k;
  ps.clusters = c.clusters;
  ps.assign_layers = c.assign_layers;
  p.pooling = init_pooling(c.op, c.hidden, ps, rng);
  p.projector = init_projector(c.projector_variant(), c.hidden, c.d_llm, rng);
  // Unit-scale frozen head, standing in for a pretrained readout.
  p.readout.w0 = uniform_matrix(c.d_llm, dims.classes, 1.0, rng);
  if (c.regime == Regime::adapted) {
    DeterministicRng arng(mix_seed(seed, kAdapterStream));
    Adapter a;
    a.b = Matrix(c.d_llm, c.rank);
    a.a = uniform_matrix(c.rank, dims.classes, 1.0 / std::sqrt(static_cast<double>(c.rank)), arng);
    a.scale = c.scale;
    p.readout.adapter = std::move(a);
  }
  return p;
}

std::vector<std::pair<std::string, Matrix*>> trainable_blocks(PipelineParams& p, Regime regime) {
  std::vector<std::pair<std::string, Matrix*>> out;
  auto collect = [&](const std::string& name, Matrix& m) { out.emplace_back(name, &m); };
  for_each_param(p.encoder, "encoder.", collect);
  for_each_param(p.pooling, "pooling.", collect);
  collect("projector.w1", p.projector.first.w);
  collect("projector.b1", p.projector.first.b);
  collect("projector.w2", p.projector.second.w);
  collect("projector.b2", p.projector.second.b);
  if (regime == Regime::adapted && p.readout.adapter) {
    collect("readout.adapter.b", p.readout.adapter->b);
    collect("readout.adapter.a", p.readout.adapter->a);
  }
  return out;
}

std::vector<PreparedExample> prepare(const std::vector<Example>& data) {
  std::vector<PreparedExample> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back({&data[i], GraphContext::from(data[i].graph), i});
  return out;
}

PipelineSettings pipeline_settings(const RunConfig& c, double rho, std::uint64_t seed) {
  PipelineSettings s;
  s.pool.k = c.k;
  s.pool.clusters = c.clusters;
  s.pool.rho = rho;
  s.pool.assign_layers = c.assign_layers;
  s.seed = seed;
  return s;
}

namespace {

struct Trace {
  Matrix h;
  PoolResult pooled;
  Matrix projected;
  PoolSettings pool;
};

ForwardResult forward_impl(const RunConfig& c, const PipelineParams& p, const PipelineSettings& s,
                           const PreparedExample& ex, Trace& t) {
  const Example& e = *ex.example;
  t.pool = s.pool;
  t.pool.seed = mix_seed(s.seed, ex.index);
  t.h = encoder_forward(e.graph.features(), ex.ctx, p.encoder);
  t.pooled = pool_forward(t.h, ex.ctx, p.pooling, t.pool);
  t.projected = project_tokens(t.pooled.tokens, p.projector);

  ForwardResult r;
  r.logits = surrogate_readout(t.projected, p.readout);
  if (e.label >= r.logits.cols()) throw InvalidArgument("label of " + e.id + " exceeds the class count");
  double mx = r.logits(0, 0);
  for (std::size_t j = 1; j < r.logits.cols(); ++j) mx = std::max(mx, r.logits(0, j));
  double z = 0.0;
  for (std::size_t j = 0; j < r.logits.cols(); ++j) z += std::exp(r.logits(0, j) - mx);
  r.cross_entropy = std::log(z) + mx - r.logits(0, e.label);
  r.loss = r.cross_entropy;
  for (const auto& [name, value] : t.pooled.aux_losses) {
    r.aux_losses[name] = value;
    r.loss += c.aux_weight(name) * value;
  }
  r.prediction = argmax_row(r.logits);
  return r;
}

}  // namespace

ForwardResult pipeline_forward(const RunConfig& c, const PipelineParams& p, const PipelineSettings& s,
                               const PreparedExample& ex) {
  Trace t;
  return forward_impl(c, p, s, ex, t);
}

BackwardResult pipeline_backward(const RunConfig& c, const PipelineParams& p, const PipelineSettings& s,
                                 const PreparedExample& ex) {
  Trace t;
  BackwardResult out;
  out.forward = forward_impl(c, p, s, ex, t);
  const Example& e = *ex.example;

  Matrix dlogits = row_softmax(out.forward.logits);
  dlogits(0, e.label) -= 1.0;
  ReadoutGrads rg = surrogate_readout_backward(t.projected, p.readout, dlogits);
  ProjectorGrads pg = project_tokens_backward(t.pooled.tokens, p.projector, rg.tokens);
  PoolUpstream up{std::move(pg.input), {}};
  for (const auto& [name, _] : t.pooled.aux_losses) up.aux[name] = c.aux_weight(name);
  PoolGrads plg = pool_backward(t.h, ex.ctx, p.pooling, t.pool, up);
  EncoderGrads eg = encoder_backward(e.graph.features(), ex.ctx, p.encoder, plg.input);

  out.grads.encoder = std::move(eg.params);
  out.grads.pooling = std::move(plg.params);
  out.grads.projector = std::move(pg.params);
  out.grads.readout.w0 = Matrix(p.readout.w0.rows(), p.readout.w0.cols());
  if (p.readout.adapter) out.grads.readout.adapter = Adapter{std::move(rg.b), std::move(rg.a), p.readout.adapter->scale};
  return out;
}

std::uint64_t checksum(const Matrix& m) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : m.data()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

SeedResult train_seed(const RunConfig& c, const std::vector<Example>& data, std::uint64_t seed,
                      const TrainOptions& opt) {
  c.validate();
  const PipelineDims dims = dims_of(data);
  const auto prepared = prepare(data);
  const PipelineSettings settings = pipeline_settings(c, resolve_rho(c, mean_graph_size(data)), seed);
  SeedResult out{SeedRun{}, init_pipeline(c, dims, seed)};
  PipelineParams& params = out.params;
  out.run.seed = seed;
  out.run.w0_checksum_before = checksum(params.readout.w0);

  const std::size_t n = prepared.size();
  auto fail = [&](std::size_t step, const std::string& what) {
    throw NumericalError("operator " + std::string(to_string(c.op)) + " (" + std::string(to_string(c.encoder)) +
                         " encoder): non-finite " + what + " at step " + std::to_string(step));
  };

  std::vector<BackwardResult> results(n);
  for (std::size_t epoch = 0; epoch <= c.epochs; ++epoch) {
    const bool update = epoch < c.epochs;
    EpochStats stats;
    if (update) {
      std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) if (opt.parallel)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        try {
          results[static_cast<std::size_t>(i)] = pipeline_backward(c, params, settings, prepared[static_cast<std::size_t>(i)]);
        } catch (...) {
#pragma omp critical(gpool_train_error)
          if (!error) error = std::current_exception();
        }
      }
      if (error) std::rethrow_exception(error);

      // Ordered reduction keeps the sum independent of thread scheduling.
      PipelineParams total = zero_grads(params);
      for (std::size_t i = 0; i < n; ++i) {
        const ForwardResult& f = results[i].forward;
        if (!std::isfinite(f.loss)) fail(epoch, "loss on " + data[i].id);
        stats.loss += f.loss;
        stats.accuracy += f.prediction == data[i].label ? 1.0 : 0.0;
        add_into(total, results[i].grads, c.regime);
      }
      auto p_blocks = trainable_blocks(params, c.regime);
      auto g_blocks = trainable_blocks(total, c.regime);
      const double step = c.lr / static_cast<double>(n);
      for (std::size_t b = 0; b < p_blocks.size(); ++b) {
        Matrix& p = *p_blocks[b].second;
        const Matrix& g = *g_blocks[b].second;
        for (std::size_t i = 0; i < p.size(); ++i) p.data()[i] -= step * g.data()[i];
        if (!p.all_finite()) fail(epoch, "parameter " + p_blocks[b].first);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const ForwardResult f = pipeline_forward(c, params, settings, prepared[i]);
        if (!std::isfinite(f.loss)) fail(epoch, "loss on " + data[i].id);
        stats.loss += f.loss;
        stats.accuracy += f.prediction == data[i].label ? 1.0 : 0.0;
      }
    }
    out.run.loss.push_back(stats.loss / static_cast<double>(n));
    out.run.accuracy.push_back(stats.accuracy / static_cast<double>(n));
  }
  out.run.final_accuracy = out.run.accuracy.back();
  out.run.w0_checksum_after = checksum(params.readout.w0);
  return out;
}

RunReport train(const RunConfig& c, const std::vector<Example>& data, const TrainOptions& opt) {
  RunReport r;
  r.op = std::string(to_string(c.op));
  r.encoder = std::string(to_string(c.encoder));
  r.regime = c.regime;
  std::vector<double> finals;
  for (std::uint64_t seed : c.seeds) {
    r.runs.push_back(train_seed(c, data, seed, opt).run);
    finals.push_back(r.runs.back().final_accuracy);
  }
  r.mean = mean_of(finals);
  r.std = population_std(finals);
  return r;
}

json run_report_to_json(const RunReport& r) {
  json runs = json::array();
  for (const auto& s : r.runs) {
    runs.push_back({{"seed", s.seed},
                    {"final_accuracy", s.final_accuracy},
                    {"accuracy", s.accuracy},
                    {"loss", s.loss},
                    {"w0_checksum_before", s.w0_checksum_before},
                    {"w0_checksum_after", s.w0_checksum_after}});
  }
  return {{"operator", r.op},
          {"encoder", r.encoder},
          {"regime", std::string(to_string(r.regime))},
          {"mean", r.mean},
          {"std", r.std},
          {"runs", std::move(runs)}};
}

RunReport run_report_from_json(const json& j) {
  try {
    RunReport r;
    r.op = j.at("operator").get<std::string>();
    r.encoder = j.value("encoder", std::string());
    r.regime = regime_from_string(j.at("regime").get<std::string>());
    r.mean = j.at("mean").get<double>();
    r.std = j.at("std").get<double>();
    for (const auto& s : j.at("runs")) {
      SeedRun run;
      run.seed = s.at("seed").get<std::uint64_t>();
      run.final_accuracy = s.at("final_accuracy").get<double>();
      run.accuracy = s.value("accuracy", std::vector<double>{});
      run.loss = s.value("loss", std::vector<double>{});
      run.w0_checksum_before = s.value("w0_checksum_before", std::uint64_t{0});
      run.w0_checksum_after = s.value("w0_checksum_after", std::uint64_t{0});
      if (!(run.final_accuracy >= 0.0 && run.final_accuracy <= 1.0)) {
        throw InvalidArgument("run report accuracy outside [0, 1]");
      }
      r.runs.push_back(std::move(run));
    }
    if (r.std < 0.0) throw InvalidArgument("run report has negative std");
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("run report: ") + e.what());
  }
}

std::string run_report_csv(const RunReport& r) {
  std::ostringstream out;
  out << std::setprecision(17) << "operator,encoder,regime,seed,epoch,loss,accuracy\n";
  for (const auto& s : r.runs) {
    for (std::size_t e = 0; e < s.loss.size(); ++e) {
      out << r.op << ',' << r.encoder << ',' << to_string(r.regime) << ',' << s.seed << ',' << e << ',' << s.loss[e]
          << ',' << s.accuracy[e] << '\n';
    }
  }
  return out.str();
}

Example gradcheck_sample(std::uint64_t seed) {
  SyntheticTaskSpec spec;
  spec.n_examples = 1;
  spec.communities_min = 2;
  spec.communities_max = 2;
  spec.nodes_per_community = kGradcheckMaxNodes / 2;
  spec.feature_dim = 4;
  spec.structure_signal = false;
  spec.redundancy_fraction = 0.0;
  spec.noise_scale = 1.0;
  return generate_dataset(spec, seed).front();
}

GradcheckReport gradcheck(const RunConfig& c, const Example& sample, std::uint64_t seed, const GradientTamper& tamper,
                          double h) {
  if (sample.graph.node_count() > kGradcheckMaxNodes) {
    throw InvalidArgument("gradcheck sample has " + std::to_string(sample.graph.node_count()) + " nodes (max " +
                          std::to_string(kGradcheckMaxNodes) + ")");
  }
  const std::vector<Example> one{sample};
  const PipelineDims dims = dims_of(one);
  const auto prepared = prepare(one);
  const PreparedExample& ex = prepared.front();
  PipelineParams params = init_pipeline(c, dims, seed);
  {
    // Checked at a random point rather than at initialization, where
    // near-uniform attention and a zero adapter B give vanishing gradients.
    // Attention score weights get a wider draw so that query/key gradients
    // clear the finite-difference roundoff floor.
    DeterministicRng rng(mix_seed(seed, kGradcheckStream));
    for (auto& [name, block] : trainable_blocks(params, Regime::adapted)) {
      const bool score = name.ends_with(".wq") || name.ends_with(".wk") ||
                         (name.starts_with("encoder.attn") && name.ends_with(".we"));
      *block = uniform_matrix(block->rows(), block->cols(), score ? 1.5 : 0.5, rng);
    }
    // W0 is not checked; a smaller head keeps the cross-entropy away from
    // saturation.
    auto& w0 = params.readout.w0;
    w0 = uniform_matrix(w0.rows(), w0.cols(), 1.0 / std::sqrt(static_cast<double>(w0.rows())), rng);
  }
  const PipelineSettings settings =
      pipeline_settings(c, resolve_rho(c, static_cast<double>(sample.graph.node_count())), seed);

  BackwardResult analytic = pipeline_backward(c, params, settings, ex);
  if (!std::isfinite(analytic.forward.loss)) throw NumericalError("gradcheck: non-finite loss");
  auto grads = trainable_blocks(analytic.grads, c.regime);

  PipelineParams work = params;
  auto work_blocks = trainable_blocks(work, c.regime);
  auto base_blocks = trainable_blocks(params, c.regime);

  GradcheckReport report;
  for (std::size_t b = 0; b < work_blocks.size(); ++b) {
    Matrix g = *grads[b].second;
    if (tamper) tamper(work_blocks[b].first, g);
    if (!g.all_finite()) throw NumericalError("gradcheck: non-finite analytic gradient in " + work_blocks[b].first);
    Matrix* target = work_blocks[b].second;
    const Matrix fd = central_difference_gradient(
        [&](const Matrix& probe) {
          *target = probe;
          return pipeline_forward(c, work, settings, ex).loss;
        },
        *base_blocks[b].second, h);
    *target = *base_blocks[b].second;
    const double err = relative_error(g, fd);
    report.blocks.push_back({work_blocks[b].first, g.size(), err});
    if (report.worst_block.empty() || err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_block = work_blocks[b].first;
    }
  }
  report.pass = report.max_rel_err < kGradcheckThreshold;
  return report;
}

std::vector<std::pair<std::string, RunConfig>> named_configs() {
  std::vector<std::pair<std::string, RunConfig>> out;
  for (PoolOperator op : kAllOperators) {
    for (EncoderKind enc : {EncoderKind::mlp, EncoderKind::gcn, EncoderKind::attn, EncoderKind::sgformer}) {
      RunConfig c;
      c.op = op;
      c.encoder = enc;
      out.emplace_back(std::string(to_string(op)) + "-" + std::string(to_string(enc)), c);
    }
  }
  return out;
}

StabilityTable stability_report(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw InvalidArgument("stability report needs at least one run report");
  std::map<std::pair<std::string, int>, std::vector<double>> groups;
  for (const auto& r : reports) {
    auto& acc = groups[{r.op, r.regime == Regime::frozen ? 0 : 1}];
    for (const auto& s : r.runs) acc.push_back(s.final_accuracy);
  }
  StabilityTable t;
  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> variances;
  for (const auto& [key, acc] : groups) {
    StabilityRow row{key.first, key.second == 0 ? Regime::frozen : Regime::adapted, mean_of(acc),
                     population_std(acc), acc.size()};
    auto& v = variances[row.op];
    (row.regime == Regime::frozen ? v.first : v.second) = row.std * row.std;
    t.rows.push_back(row);
  }
  for (const auto& [op, v] : variances) {
    if (v.first && v.second && *v.first > 0.0) t.variance_ratio[op] = *v.second / *v.first;
    else t.variance_ratio[op] = std::nullopt;
  }
  return t;
}

std::string stability_table_text(const StabilityTable& t) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "operator" << std::setw(10) << "regime" << std::right << std::setw(6) << "runs"
      << std::setw(10) << "mean" << std::setw(10) << "std" << '\n';
  for (const auto& r : t.rows) {
    out << std::left << std::setw(10) << r.op << std::setw(10) << to_string(r.regime) << std::right << std::setw(6)
        << r.runs << std::setw(10) << fixed(r.mean, 4) << std::setw(10) << fixed(r.std, 4) << '\n';
  }
  out << "\nvariance ratio (adapted / frozen)\n";
  for (const auto& [op, ratio] : t.variance_ratio) {
    out << std::left << std::setw(10) << op << std::right << std::setw(12) << (ratio ? fixed(*ratio, 4) : "n/a")
        << '\n';
  }
  return out.str();
}

std::string stability_table_csv(const StabilityTable& t) {
  std::ostringstream out;
  out << std::setprecision(17) << "operator,regime,runs,mean,std,variance_ratio\n";
  for (const auto& r : t.rows) {
    const auto& ratio = t.variance_ratio.at(r.op);
    out << r.op << ',' << to_string(r.regime) << ',' << r.runs << ',' << r.mean << ',' << r.std << ',';
    if (ratio) out << *ratio;
    out << '\n';
  }
  return out.str();
}

json stability_table_json(const StabilityTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"operator", r.op},
                    {"regime", std::string(to_string(r.regime))},
                    {"runs", r.runs},
                    {"mean", r.mean},
                    {"std", r.std}});
  }
  json ratios = json::object();
  for (const auto& [op, ratio] : t.variance_ratio) ratios[op] = ratio ? json(*ratio) : json(nullptr);
  return {{"rows", std::move(rows)}, {"variance_ratio", std::move(ratios)}};
}

}  // namespace gpool
