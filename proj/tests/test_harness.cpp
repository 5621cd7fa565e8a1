#include <doctest.h>

#include <cmath>

#include "gpool/harness.hpp"
#include "support.hpp"

using namespace gpool;

namespace {

std::vector<Example> toy_data(std::size_t n = 16) {
  SyntheticTaskSpec spec;
  spec.n_examples = n;
  spec.communities_min = 2;
  spec.communities_max = 3;
  spec.nodes_per_community = 3;
  spec.feature_dim = 4;
  return generate_dataset(spec, 5);
}

RunConfig small_config(PoolOperator op, Regime regime) {
  RunConfig c;
  c.op = op;
  c.regime = regime;
  c.hidden = 8;
  c.d_llm = 8;
  c.rank = 2;
  c.k = 3;
  c.clusters = 2;
  c.epochs = 3;
  c.seeds = {1, 2};
  return c;
}

ReadoutParams readout(DeterministicRng& rng, bool adapter) {
  ReadoutParams p;
  p.w0 = uniform_matrix(6, 3, 1.0, rng);
  if (adapter) p.adapter = Adapter{uniform_matrix(6, 2, 1.0, rng), uniform_matrix(2, 3, 1.0, rng), 4.0};
  return p;
}

RunReport fake_report(const std::string& op, Regime regime, std::vector<double> accs) {
  RunReport r;
  r.op = op;
  r.encoder = "gcn";
  r.regime = regime;
  for (std::size_t i = 0; i < accs.size(); ++i) {
    SeedRun s;
    s.seed = i + 1;
    s.final_accuracy = accs[i];
    r.runs.push_back(s);
  }
  return r;
}

}  // namespace

TEST_CASE("surrogate readout examples") {
  DeterministicRng rng(1);
  ReadoutParams with = readout(rng, true);
  ReadoutParams without = with;
  without.adapter.reset();
  const Matrix tokens = uniform_matrix(4, 6, 1.0, rng);

  ReadoutParams zero_b = with;
  zero_b.adapter->b = Matrix(6, 2);
  CHECK(surrogate_readout(tokens, zero_b) == surrogate_readout(tokens, without));

  const Matrix t = uniform_matrix(1, 6, 1.0, rng);
  CHECK(test::max_abs_diff(surrogate_readout(t, with), matmul(t, with.effective())) < 1e-15);

  const Matrix base = surrogate_readout(tokens, without);
  const Matrix delta = surrogate_readout(tokens, with) - base;
  ReadoutParams doubled = with;
  doubled.adapter->scale *= 2.0;
  CHECK(test::max_abs_diff(surrogate_readout(tokens, doubled) - base, delta * 2.0) < 1e-13);

  CHECK_THROWS_AS(surrogate_readout(Matrix(2, 5), with), DimensionError);
}

TEST_CASE("surrogate readout gradients match finite differences") {
  DeterministicRng rng(2);
  ReadoutParams p = readout(rng, true);
  Matrix tokens = uniform_matrix(3, 6, 1.0, rng);
  const Matrix r = uniform_matrix(1, 3, 1.0, rng);
  auto loss = [&] { return frobenius_dot(surrogate_readout(tokens, p), r); };
  const ReadoutGrads g = surrogate_readout_backward(tokens, p, r);
  CHECK(relative_error(g.tokens, test::fd_wrt(tokens, loss)) < 1e-5);
  CHECK(relative_error(g.b, test::fd_wrt(p.adapter->b, loss)) < 1e-5);
  CHECK(relative_error(g.a, test::fd_wrt(p.adapter->a, loss)) < 1e-5);
}

TEST_CASE("a rank-r adapter reproduces any rank-r readout delta") {
  DeterministicRng rng(3);
  const std::size_t d_llm = 6, classes = 2, r = std::min(d_llm, classes);
  const Matrix u = uniform_matrix(d_llm, r, 1.0, rng), v = uniform_matrix(r, classes, 1.0, rng);
  const Matrix target = matmul(u, v);
  ReadoutParams p;
  p.w0 = uniform_matrix(d_llm, classes, 1.0, rng);
  p.adapter = Adapter{u, v, static_cast<double>(r)};
  CHECK(test::max_abs_diff(p.effective(), p.w0 + target) < 1e-15);
}

TEST_CASE("lr = 0 leaves every parameter unchanged") {
  const auto data = toy_data();
  RunConfig c = small_config(PoolOperator::mincut, Regime::adapted);
  c.lr = 0.0;
  const SeedResult res = train_seed(c, data, 3);
  const PipelineParams init = init_pipeline(c, {4, 0, 2}, 3);
  PipelineParams trained = res.params;
  PipelineParams fresh = init;
  auto a = trainable_blocks(trained, Regime::adapted);
  auto b = trainable_blocks(fresh, Regime::adapted);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i].second == *b[i].second);
  for (double acc : res.run.accuracy) CHECK(acc == res.run.accuracy.front());
}

TEST_CASE("training is deterministic and independent of parallelism") {
  const auto data = toy_data();
  for (PoolOperator op : {PoolOperator::randk, PoolOperator::vn}) {
    const RunConfig c = small_config(op, Regime::adapted);
    const std::string once = run_report_to_json(train(c, data)).dump();
    CHECK(run_report_to_json(train(c, data)).dump() == once);
    CHECK(run_report_to_json(train(c, data, {.parallel = false})).dump() == once);
  }
}

TEST_CASE("training never touches W0") {
  const auto data = toy_data();
  for (Regime regime : {Regime::frozen, Regime::adapted}) {
    const RunReport r = train(small_config(PoolOperator::topk, regime), data);
    for (const auto& s : r.runs) CHECK(s.w0_checksum_before == s.w0_checksum_after);
  }
  PipelineParams p = init_pipeline(small_config(PoolOperator::mean, Regime::frozen), {4, 0, 2}, 1);
  for (const auto& [name, block] : trainable_blocks(p, Regime::frozen)) CHECK(name.find("adapter") == std::string::npos);
  CHECK_FALSE(p.readout.adapter.has_value());
}

TEST_CASE("losses stay finite for every named config") {
  const auto data = toy_data(8);
  for (auto [name, c] : named_configs()) {
    CAPTURE(name);
    c.seeds = {1};
    c.epochs = 2;
    const RunReport r = train(c, data);
    for (double l : r.runs.front().loss) CHECK(std::isfinite(l));
  }
}

TEST_CASE("a diverging run names the operator and step") {
  RunConfig c = small_config(PoolOperator::diff, Regime::adapted);
  c.lr = 1e200;
  c.epochs = 5;
  try {
    train_seed(c, toy_data(), 1);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    CHECK(what.find("diff") != std::string::npos);
    CHECK(what.find("step") != std::string::npos);
  }
}

TEST_CASE("gradcheck passes for mean and mincut and flags a corrupted block") {
  const Example sample = gradcheck_sample(1);
  CHECK(sample.graph.node_count() <= kGradcheckMaxNodes);
  RunConfig mean_cfg = small_config(PoolOperator::mean, Regime::adapted);
  const GradcheckReport mean = gradcheck(mean_cfg, sample, 1);
  CHECK(mean.pass);
  CHECK(mean.max_rel_err < kGradcheckThreshold);

  RunConfig mincut_cfg = small_config(PoolOperator::mincut, Regime::adapted);
  const GradcheckReport mincut = gradcheck(mincut_cfg, sample, 1);
  CHECK(mincut.pass);
  bool saw_assign = false;
  for (const auto& b : mincut.blocks) saw_assign = saw_assign || b.name.starts_with("pooling.assign");
  CHECK(saw_assign);

  const GradcheckReport bad = gradcheck(mincut_cfg, sample, 1, [](const std::string& block, Matrix& g) {
    if (block == "projector.w2") g(0, 0) += 1.0;
  });
  CHECK_FALSE(bad.pass);
  CHECK(bad.worst_block == "projector.w2");
}

TEST_CASE("stability report examples") {
  const StabilityTable same = stability_report({fake_report("mean", Regime::frozen, {0.7, 0.7, 0.7})});
  CHECK(same.rows.front().std == 0.0);

  const StabilityTable t = stability_report(
      {fake_report("mean", Regime::frozen, {0.6, 0.8}), fake_report("mean", Regime::adapted, {0.5, 0.9})});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].regime == Regime::frozen);
  CHECK(t.rows[0].mean == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(t.rows[0].std == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(*t.variance_ratio.at("mean") == doctest::Approx(4.0).epsilon(1e-12));

  std::vector<RunReport> reports;
  for (std::string op : {"vn", "topk", "mean", "diff", "mincut"})
    for (Regime regime : {Regime::adapted, Regime::frozen}) reports.push_back(fake_report(op, regime, {0.5, 0.6}));
  const StabilityTable ten = stability_report(reports);
  REQUIRE(ten.rows.size() == 10);
  for (std::size_t i = 1; i < ten.rows.size(); ++i) CHECK(ten.rows[i - 1].op <= ten.rows[i].op);
  CHECK(ten.rows[0].op == "diff");
  CHECK(ten.rows[0].regime == Regime::frozen);

  CHECK_THROWS_AS(stability_report({}), InvalidArgument);
  CHECK(stability_table_text(ten).find("mincut") != std::string::npos);
}

TEST_CASE("run configs parse strictly") {
  const RunConfig c = run_config_from_json(nlohmann::json::parse(R"({
    "encoder": {"kind": "attn", "layers": 1, "hidden": 12},
    "pooling": {"operator": "diff", "clusters": 4, "projector": "vn"},
    "regime": "frozen", "seeds": [7], "epochs": 3, "lr": 0.1,
    "lambda": {"default": 0.5, "lp": 2.0}
  })"));
  CHECK(c.encoder == EncoderKind::attn);
  CHECK(c.hidden == 12);
  CHECK(c.op == PoolOperator::diff);
  CHECK(c.clusters == 4);
  CHECK(c.projector_variant() == ProjectorVariant::vn);
  CHECK(c.regime == Regime::frozen);
  CHECK(c.seeds == std::vector<std::uint64_t>{7});
  CHECK(c.aux_weight("lp") == 2.0);
  CHECK(c.aux_weight("entropy") == 0.5);
  const RunConfig back = run_config_from_json(run_config_to_json(c));
  CHECK(run_config_to_json(back) == run_config_to_json(c));

  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"epocs", 3}}), InvalidArgument);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"pooling", {{"operator", "max"}}}}), InvalidArgument);
}

TEST_CASE("run reports round-trip through JSON and CSV") {
  const RunReport r = train(small_config(PoolOperator::mean, Regime::adapted), toy_data(8));
  CHECK(run_report_to_json(run_report_from_json(run_report_to_json(r))) == run_report_to_json(r));
  const std::string csv = run_report_csv(r);
  CHECK(csv.starts_with("operator,encoder,regime,seed,epoch,loss,accuracy\n"));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 4);
  CHECK_THROWS_AS(run_report_from_json(nlohmann::json{{"op", 3}}), ParseError);
}

TEST_CASE("gradcheck passes for every named config") {
  const Example sample = gradcheck_sample(1);
  for (const auto& [name, c] : named_configs()) {
    CAPTURE(name);
    const GradcheckReport r = gradcheck(c, sample, 1);
    CHECK(r.pass);
  }
}
