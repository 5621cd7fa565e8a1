#include "gpool/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include "gpool/dataset.hpp"
#include "gpool/fande.hpp"
#include "gpool/graph_io.hpp"
#include "gpool/harness.hpp"
#include "gpool/retriever.hpp"

#ifndef GPOOL_DATA_DIR
#define GPOOL_DATA_DIR "data"
#endif

namespace gpool::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(where + ": " + e.what(), e.byte);
  }
}

void require_output_dir(const std::string& path) {
  if (path.empty()) return;
  const fs::path parent = fs::absolute(fs::path(path)).parent_path();
  if (!fs::is_directory(parent)) throw UsageError("output directory " + parent.string() + " does not exist");
}

// Writes to `path` when given, otherwise to `out`.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) out << text;
  else write_file_atomic(path, text);
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string percent(std::size_t part, std::size_t whole) {
  return fixed(whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole), 1) + "%";
}

std::vector<double> parse_vector(const std::string& arg, const std::string& what) {
  const std::string text = !arg.empty() && (arg.front() == '[' || arg.front() == '{') ? arg : read_file(arg);
  const json j = parse_json(text, what);
  try {
    return (j.is_object() ? j.at("query") : j).get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ParseError(what + ": expected an array of numbers (" + e.what() + ")");
  }
}

std::string matrix_csv(const Matrix& m) {
  std::ostringstream s;
  s << std::setprecision(17);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) s << (j ? "," : "") << m(i, j);
    s << '\n';
  }
  return s.str();
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  std::string config;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  SyntheticTaskSpec spec;
  if (!a.config.empty()) spec = spec_from_json(parse_json(read_file(a.config), a.config));
  spec.validate();
  require_output_dir(a.out);
  const auto data = generate_dataset(spec, a.seed);
  std::size_t dual = 0, feature_only = 0, structure_only = 0;
  for (const auto& ex : data) {
    if (ex.dual_tagged()) ++dual;
    else if (ex.feature_solvable) ++feature_only;
    else ++structure_only;
  }
  emit(a.out, write_dataset_jsonl(data), out);
  std::ostream& log = a.out.empty() ? std::cerr : out;
  log << "examples " << data.size() << '\n'
      << "classes " << spec.num_classes() << '\n'
      << "dual-tagged " << dual << " (" << percent(dual, data.size()) << ")\n"
      << "feature-only " << feature_only << '\n'
      << "structure-only " << structure_only << '\n';
  if (!a.out.empty()) log << "wrote " << a.out << '\n';
  return ok;
}

// ---- retrieve -------------------------------------------------------------

struct RetrieveArgs {
  std::string graph;
  std::string query;
  std::string prizes;
  std::size_t top_n = 3;
  double edge_cost = kDefaultEdgeCost;
  bool oracle = false;
  std::string out;
};

PrizedGraph load_prizes(const AttributedGraph& g, const std::string& path, double edge_cost) {
  const json j = parse_json(read_file(path), path);
  try {
    PrizedGraph pg{g, j.at("prizes").get<std::vector<double>>(),
                   j.contains("edge_costs") ? j.at("edge_costs").get<std::vector<double>>()
                                            : std::vector<double>(g.edges().size(), edge_cost)};
    pg.validate();
    return pg;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

int cmd_retrieve(const RetrieveArgs& a, std::ostream& out, std::ostream& err) {
  if (a.query.empty() == a.prizes.empty()) throw UsageError("retrieve needs exactly one of --query or --prizes");
  require_output_dir(a.out);
  const AttributedGraph g = read_graph_json(read_file(a.graph));
  const PrizedGraph pg = a.prizes.empty() ? assign_prizes(g, parse_vector(a.query, "query"), a.top_n, a.edge_cost)
                                          : load_prizes(g, a.prizes, a.edge_cost);
  const Subgraph sub = solve_pcst(pg);
  const double objective = pcst_objective(sub, pg);

  const json result = {{"nodes", sub.nodes},
                       {"edges", sub.edges},
                       {"objective", objective},
                       {"graph", sub.empty() ? json(nullptr) : graph_to_json(sub.graph)}};
  if (!a.out.empty()) write_file_atomic(a.out, result.dump(2) + "\n");

  out << std::setprecision(10) << "objective " << objective << '\n' << "nodes";
  for (auto n : sub.nodes) out << ' ' << n;
  out << '\n';
  if (a.oracle) {
    if (g.node_count() > kOracleMaxNodes) {
      err << "oracle refused: " << g.node_count() << " nodes exceed the " << kOracleMaxNodes << "-node limit\n";
    } else {
      const PcstOptimum best = exact_pcst_oracle(pg);
      const double ratio = best.objective > 0.0 ? objective / best.objective : 1.0;
      out << "oracle " << best.objective << '\n' << "ratio " << ratio << '\n';
    }
  }
  if (a.out.empty()) out << result.dump(2) << '\n';
  return ok;
}

// ---- pool -----------------------------------------------------------------

struct PoolArgs {
  std::string graph;
  std::string config;
  std::string op;
  std::string encoder = "none";
  std::uint64_t seed = 1;
  std::string format = "json";
  std::string out;
};

int cmd_pool(const PoolArgs& a, std::ostream& out) {
  RunConfig c;
  if (!a.config.empty()) apply_pooling_json(parse_json(read_file(a.config), a.config), c);
  if (!a.op.empty()) c.op = pool_operator_from_string(a.op);
  require_output_dir(a.out);
  const AttributedGraph g = read_graph_json(read_file(a.graph));
  if (g.node_count() == 0) throw InvalidArgument("graph has no nodes");
  const GraphContext ctx = GraphContext::from(g);

  DeterministicRng rng(a.seed);
  Matrix h = g.features();
  if (a.encoder != "none") {
    EncoderShape shape;
    shape.input_dim = g.feature_dim();
    shape.edge_dim = g.edge_feature_dim();
    const EncoderParams enc = init_encoder(encoder_kind_from_string(a.encoder), shape, rng);
    h = encoder_forward(h, ctx, enc);
  }
  PoolSettings s;
  s.k = c.k;
  s.clusters = c.clusters;
  s.rho = c.rho ? *c.rho : calibrate_retention(c.k, static_cast<double>(g.node_count())).value;
  s.seed = a.seed;
  s.assign_layers = c.assign_layers;
  const PoolingParams params = init_pooling(c.op, h.cols(), s, rng);
  const PoolResult r = pool_forward(h, ctx, params, s);

  std::string text;
  if (a.format == "csv") {
    text = matrix_csv(r.tokens);
  } else if (a.format == "table") {
    std::ostringstream t;
    t << "operator " << to_string(c.op) << ", " << r.token_count() << " token(s)\n";
    for (std::size_t i = 0; i < r.tokens.rows(); ++i) {
      t << "  " << std::setw(3) << i << ':';
      for (std::size_t j = 0; j < r.tokens.cols(); ++j) t << ' ' << std::setw(10) << fixed(r.tokens(i, j), 5);
      t << '\n';
    }
    for (const auto& [name, v] : r.aux_losses) t << name << ' ' << fixed(v, 8) << '\n';
    if (r.selection) {
      t << "selection";
      for (auto i : *r.selection) t << ' ' << i;
      t << '\n';
    }
    text = t.str();
  } else {
    json j = {{"operator", std::string(to_string(c.op))},
              {"tokens", matrix_to_json(r.tokens)},
              {"aux_losses", r.aux_losses},
              {"clusters_reduced", r.clusters_reduced}};
    if (r.selection) j["selection"] = *r.selection;
    text = j.dump(2) + "\n";
  }
  emit(a.out, text, out);
  return ok;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string op;
  std::string regime;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> epochs;
  std::string format = "json";
  std::string out;
};

std::string report_table(const RunReport& r) {
  std::ostringstream t;
  t << "operator " << r.op << ", encoder " << r.encoder << ", regime " << to_string(r.regime) << '\n';
  for (const auto& s : r.runs) {
    t << "  seed " << std::setw(4) << s.seed << "  loss " << fixed(s.loss.back(), 6) << "  accuracy "
      << fixed(s.final_accuracy, 4) << '\n';
  }
  t << "accuracy " << fixed(r.mean, 4) << " +/- " << fixed(r.std, 4) << '\n';
  return t.str();
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfig c;
  if (!a.config.empty()) c = run_config_from_json(parse_json(read_file(a.config), a.config));
  if (!a.op.empty()) c.op = pool_operator_from_string(a.op);
  if (!a.regime.empty()) c.regime = regime_from_string(a.regime);
  if (!a.seeds.empty()) c.seeds = a.seeds;
  if (a.epochs) c.epochs = *a.epochs;
  c.validate();
  require_output_dir(a.out);
  const auto data = read_dataset_jsonl(read_file(a.data));
  const RunReport r = train(c, data);
  std::string text;
  if (a.format == "csv") text = run_report_csv(r);
  else if (a.format == "table") text = report_table(r);
  else text = run_report_to_json(r).dump(2) + "\n";
  emit(a.out, text, out);
  if (!a.out.empty()) {
    out << "accuracy " << fixed(r.mean, 4) << " +/- " << fixed(r.std, 4) << " over " << r.runs.size()
        << " seed(s)\n";
  }
  return ok;
}

// ---- gradcheck ------------------------------------------------------------

struct GradcheckArgs {
  std::string config;
  std::string op;
  std::string encoder;
  std::uint64_t seed = 1;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  std::vector<std::pair<std::string, RunConfig>> configs;
  if (!a.config.empty()) {
    RunConfig c = run_config_from_json(parse_json(read_file(a.config), a.config));
    if (!a.op.empty()) c.op = pool_operator_from_string(a.op);
    if (!a.encoder.empty()) c.encoder = encoder_kind_from_string(a.encoder);
    configs.emplace_back(std::string(to_string(c.op)) + "-" + std::string(to_string(c.encoder)), c);
  } else {
    const auto op = a.op.empty() ? std::nullopt : std::optional(pool_operator_from_string(a.op));
    const auto enc = a.encoder.empty() ? std::nullopt : std::optional(encoder_kind_from_string(a.encoder));
    for (auto& [name, c] : named_configs()) {
      if ((!op || c.op == *op) && (!enc || c.encoder == *enc)) configs.emplace_back(name, c);
    }
  }

  const Example sample = gradcheck_sample(a.seed);
  double worst = 0.0;
  std::string worst_where;
  bool pass = true;
  for (const auto& [name, c] : configs) {
    const GradcheckReport r = gradcheck(c, sample, a.seed);
    out << std::left << std::setw(18) << name << std::right << (r.pass ? " PASS" : " FAIL")
        << " max_rel_err=" << std::scientific << std::setprecision(3) << r.max_rel_err << std::defaultfloat << " ("
        << r.worst_block << ")\n";
    pass = pass && r.pass;
    if (r.max_rel_err >= worst) {
      worst = r.max_rel_err;
      worst_where = name + ": " + r.worst_block;
    }
  }
  out << (pass ? "PASS" : "FAIL") << " max_rel_err=" << std::scientific << std::setprecision(3) << worst
      << std::defaultfloat;
  if (!pass) out << " (" << worst_where << ")";
  out << '\n';
  return pass ? ok : data;
}

// ---- fande ----------------------------------------------------------------

struct FandeArgs {
  std::vector<std::string> logs;
  std::vector<std::string> pairs;
  std::vector<std::int64_t> seeds;
  std::string format = "table";
  std::string out;
};

std::vector<std::pair<std::string, std::string>> default_logs() {
  const fs::path dir = fs::path(GPOOL_DATA_DIR) / "fande";
  return {{"ExplaGraphs", (dir / "explagraphs.jsonl").string()}, {"WebQSP", (dir / "webqsp.jsonl").string()}};
}

int cmd_fande(const FandeArgs& a, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> logs;
  for (const auto& spec : a.logs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) logs.emplace_back(fs::path(spec).stem().string(), spec);
    else logs.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
  }
  if (logs.empty()) logs = default_logs();
  for (const auto& [_, path] : logs) {
    if (!fs::is_regular_file(path)) throw UsageError("prediction log " + path + " does not exist");
  }
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& p : a.pairs) {
    const auto colon = p.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == p.size()) {
      throw UsageError("--pair expects FEATURE_MODEL:STRUCTURE_MODEL, got \"" + p + "\"");
    }
    pairs.emplace_back(p.substr(0, colon), p.substr(colon + 1));
  }
  const std::vector<std::int64_t> seeds = a.seeds.empty() ? kDefaultFandeSeeds : a.seeds;
  require_output_dir(a.out);

  std::vector<FandeRow> rows;
  for (const auto& [name, path] : logs) {
    const PredictionLog log = PredictionLog::from_jsonl(read_file(path));
    auto use = pairs;
    if (use.empty()) {
      const auto models = log.models();
      for (const auto& [f, e] : {std::pair<std::string, std::string>{"MLP", "GCN"}, {"Transformer", "GT"}}) {
        if (models.contains(f) && models.contains(e)) use.emplace_back(f, e);
      }
      if (use.empty()) throw UsageError("no --pair given and " + path + " lacks the default model pairs");
    }
    for (const auto& [f, e] : use) rows.push_back(fande_analysis(log, name, f, e, seeds));
  }

  std::string text;
  if (a.format == "json") {
    text = fande_report_json(rows).dump(2) + "\n";
  } else if (a.format == "csv") {
    std::ostringstream s;
    s << "dataset,feature_model,structure_model,both,only_structure,only_feature,neither,fande,fande_rounded\n";
    for (const auto& r : rows) {
      s << r.dataset << ',' << r.feature_model << ',' << r.structure_model << ',' << r.counts.both << ','
        << r.counts.only_structure << ',' << r.counts.only_feature << ',' << r.counts.neither << ','
        << std::setprecision(17) << r.score << ',' << fixed(r.rounded, 2) << '\n';
    }
    text = s.str();
  } else {
    text = fande_report_table(rows);
  }
  emit(a.out, text, out);
  return ok;
}

// ---- report ---------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string format = "table";
  std::string out;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  require_output_dir(a.out);
  std::vector<RunReport> reports;
  for (const auto& path : a.inputs) reports.push_back(run_report_from_json(parse_json(read_file(path), path)));
  const StabilityTable t = stability_report(reports);
  std::string text;
  if (a.format == "json") text = stability_table_json(t).dump(2) + "\n";
  else if (a.format == "csv") text = stability_table_csv(t);
  else text = stability_table_text(t);
  emit(a.out, text, out);
  return ok;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const fs::path target(path);
  std::random_device rd;
  const fs::path tmp = target.parent_path() / (target.filename().string() + ".tmp-" + std::to_string(rd()));
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw UsageError("cannot write " + tmp.string());
    f << contents;
    f.flush();
    if (!f) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw Error("write to " + tmp.string() + " failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error("cannot move output into " + path);
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Graph pooling toolkit: synthetic data, retrieval, pooling, training and FandE reports", "gpool"};
  app.require_subcommand(1);
  const auto format_check = CLI::IsMember({"json", "csv", "table"});

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate a synthetic classification dataset (JSON lines)");
  g->add_option("--config", gen.config, "Dataset spec JSON")->check(CLI::ExistingFile);
  g->add_option("--seed", gen.seed, "Generator seed");
  g->add_option("--out", gen.out, "Output path (stdout when omitted)");

  RetrieveArgs ret;
  auto* r = app.add_subcommand("retrieve", "Extract a PCST subgraph for a query");
  r->add_option("--graph", ret.graph, "Graph JSON")->required()->check(CLI::ExistingFile);
  r->add_option("--query", ret.query, "Query vector: inline JSON array or a file holding one");
  r->add_option("--prizes", ret.prizes, "Explicit {\"prizes\":[..],\"edge_costs\":[..]} file")
      ->check(CLI::ExistingFile);
  r->add_option("--top-n", ret.top_n, "Number of prized nodes");
  r->add_option("--edge-cost", ret.edge_cost, "Uniform edge cost");
  r->add_flag("--oracle", ret.oracle, "Also run the exhaustive solver (at most 12 nodes)");
  r->add_option("--out", ret.out, "Subgraph JSON output path");

  PoolArgs pool;
  auto* p = app.add_subcommand("pool", "Pool one graph into tokens");
  p->add_option("--graph", pool.graph, "Graph JSON")->required()->check(CLI::ExistingFile);
  p->add_option("--config", pool.config, "Pooling config JSON")->check(CLI::ExistingFile);
  p->add_option("--operator", pool.op, "mean|randk|all|topk|sag|diff|mincut|vn");
  p->add_option("--encoder", pool.encoder, "none|mlp|gcn|attn|sgformer");
  p->add_option("--seed", pool.seed, "Initialization seed");
  p->add_option("--format", pool.format, "json|csv|table")->check(format_check);
  p->add_option("--out", pool.out, "Output path");

  TrainArgs tr;
  std::size_t epochs = 0;
  auto* t = app.add_subcommand("train", "Train the pipeline over several seeds");
  t->add_option("--data", tr.data, "Dataset JSON lines")->required()->check(CLI::ExistingFile);
  t->add_option("--config", tr.config, "Run config JSON")->check(CLI::ExistingFile);
  t->add_option("--operator", tr.op, "Pooling operator override");
  t->add_option("--regime", tr.regime, "frozen|adapted");
  t->add_option("--seeds", tr.seeds, "Comma-separated seeds")->delimiter(',');
  auto* epochs_opt = t->add_option("--epochs", epochs, "Epoch count override");
  t->add_option("--format", tr.format, "json|csv|table")->check(format_check);
  t->add_option("--out", tr.out, "Report output path");

  GradcheckArgs gc;
  auto* c = app.add_subcommand("gradcheck", "Finite-difference check of pipeline gradients");
  c->add_option("--config", gc.config, "Run config JSON (default: every named config)")->check(CLI::ExistingFile);
  c->add_option("--operator", gc.op, "Restrict to one pooling operator");
  c->add_option("--encoder", gc.encoder, "Restrict to one encoder");
  c->add_option("--seed", gc.seed, "Sample and parameter seed");

  FandeArgs fa;
  auto* f = app.add_subcommand("fande", "FandE redundancy scores from prediction logs");
  f->add_option("--log", fa.logs, "Prediction log, optionally NAME=PATH (default: bundled fixtures)");
  f->add_option("--pair", fa.pairs, "FEATURE_MODEL:STRUCTURE_MODEL (repeatable)");
  f->add_option("--seeds", fa.seeds, "Comma-separated seeds")->delimiter(',');
  f->add_option("--format", fa.format, "json|csv|table")->check(format_check);
  f->add_option("--out", fa.out, "Output path");

  ReportArgs rep;
  auto* rp = app.add_subcommand("report", "Merge run reports into a stability table");
  rp->add_option("reports", rep.inputs, "Run report JSON files")->required()->check(CLI::ExistingFile);
  rp->add_option("--format", rep.format, "json|csv|table")->check(format_check);
  rp->add_option("--out", rep.out, "Output path");

  std::vector<std::string> argv_store{"gpool"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_store) argv.push_back(s.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }

  try {
    if (*g) return cmd_generate(gen, out);
    if (*r) return cmd_retrieve(ret, out, err);
    if (*p) return cmd_pool(pool, out);
    if (*t) {
      if (*epochs_opt) tr.epochs = epochs;
      return cmd_train(tr, out);
    }
    if (*c) return cmd_gradcheck(gc, out);
    if (*f) return cmd_fande(fa, out);
    if (*rp) return cmd_report(rep, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const CoverageError& e) {
    err << "error: " << e.what() << '\n';
    return data;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return data;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return data;
  }
  return usage;
}

}  // namespace gpool::cli
