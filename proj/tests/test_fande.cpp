#include <doctest.h>

#include <fstream>
#include <sstream>

#include "gpool/fande.hpp"
#include "gpool/numerics.hpp"

using namespace gpool;

namespace {

std::set<std::string> ids(std::size_t n, std::size_t from = 0) {
  std::set<std::string> out;
  for (std::size_t i = from; i < from + n; ++i) out.insert("x" + std::to_string(i));
  return out;
}

PredictionLog log_from(const std::string& model, const std::vector<std::vector<bool>>& correct) {
  std::vector<PredictionRecord> recs;
  for (std::size_t s = 0; s < correct.size(); ++s)
    for (std::size_t i = 0; i < correct[s].size(); ++i)
      recs.push_back({model, static_cast<std::int64_t>(s + 1), "x" + std::to_string(i), correct[s][i] ? "a" : "b", "a"});
  return PredictionLog(recs);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("solvable_set examples") {
  CHECK(solvable_set(log_from("m", {{true, true, true}}), "m", {1}).examples == ids(3));
  const PredictionLog three_of_four = log_from("m", {{true, true}, {true, true}, {true, false}, {true, true}});
  CHECK(solvable_set(three_of_four, "m", {1, 2, 3, 4}).examples == ids(1));
  CHECK(solvable_set(log_from("m", {{true, false}, {false, true}}), "m", {1, 2}).examples.empty());
}

TEST_CASE("labels are compared after trimming") {
  CHECK(labels_match(" yes\n", "yes"));
  CHECK_FALSE(labels_match("Yes", "yes"));
  CHECK(labels_match("", "  "));
}

TEST_CASE("missing coverage is reported with the gaps") {
  std::vector<PredictionRecord> recs{{"m", 1, "x0", "a", "a"}, {"m", 1, "x1", "a", "a"}, {"m", 2, "x0", "a", "a"}};
  const PredictionLog log(recs);
  try {
    solvable_set(log, "m", {1, 2, 3});
    FAIL("expected CoverageError");
  } catch (const CoverageError& e) {
    CHECK(e.gaps().size() == 3);
  }
  CHECK_THROWS_AS(PredictionLog({{"m", 1, "x0", "a", "a"}, {"m", 1, "x0", "b", "a"}}), InvalidArgument);
}

TEST_CASE("fande_score examples from reference counts") {
  auto score = [](std::size_t both, std::size_t only_f, std::size_t only_e, std::size_t neither) {
    const std::set<std::string> p = ids(both + only_f + only_e + neither);
    SolvableSet sf{"F", ids(both + only_f)};
    SolvableSet se{"E", ids(both)};
    for (const auto& id : ids(only_e, both + only_f)) se.examples.insert(id);
    const Contingency c = contingency(sf, se, p);
    CHECK(c == Contingency{both, only_e, only_f, neither});
    return fande_score(sf, se, p.size());
  };
  CHECK(score(315, 30, 85, 124) == doctest::Approx(315.0 / 554));
  CHECK(std::round(score(315, 30, 85, 124) * 100) / 100 == 0.57);
  CHECK(std::round(score(807, 129, 83, 609) * 100) / 100 == 0.50);
  const SolvableSet all{"F", ids(4)};
  CHECK(fande_score(all, all, 4) == 1.0);
  CHECK_THROWS_AS(fande_score(all, all, 0), InvalidArgument);
  CHECK_THROWS_AS(contingency(all, all, ids(3)), InvalidArgument);
  CHECK(contingency({"F", ids(2)}, {"E", ids(3, 2)}, ids(5)) == Contingency{0, 3, 2, 0});
}

TEST_CASE("bundled logs reproduce the reference tables") {
  const std::string dir = GPOOL_DATA_DIR "/fande/";
  const PredictionLog expla = PredictionLog::from_jsonl(slurp(dir + "explagraphs.jsonl"));
  const PredictionLog webqsp = PredictionLog::from_jsonl(slurp(dir + "webqsp.jsonl"));
  const FandeRow a = fande_analysis(expla, "ExplaGraphs", "MLP", "GCN", kDefaultFandeSeeds);
  CHECK(a.counts == Contingency{315, 85, 30, 124});
  CHECK(a.rounded == 0.57);
  CHECK(fande_analysis(webqsp, "WebQSP", "MLP", "GCN", kDefaultFandeSeeds).rounded == 0.49);
  CHECK(fande_analysis(expla, "ExplaGraphs", "Transformer", "GT", kDefaultFandeSeeds).rounded == 0.64);
  const FandeRow d = fande_analysis(webqsp, "WebQSP", "Transformer", "GT", kDefaultFandeSeeds);
  CHECK(d.counts == Contingency{807, 83, 129, 609});
  CHECK(d.rounded == 0.50);
  const std::string table = fande_report_table({a, d});
  CHECK(table.find("0.57") != std::string::npos);
  CHECK(fande_report_json({a, d}).at("fande").size() == 2);
}

TEST_CASE("malformed log lines are rejected with the line number") {
  CHECK_THROWS_AS(PredictionLog::from_jsonl("{\"model\":\"m\",\"seed\":1,\"id\":\"x\",\"pred\":\"a\",\"gold\":\"a\"}\n{oops"),
                  ParseError);
  CHECK_THROWS_AS(PredictionLog::from_jsonl("{\"model\":\"m\",\"seed\":\"one\",\"id\":\"x\",\"pred\":\"a\",\"gold\":\"a\"}"),
                  ParseError);
}

TEST_CASE("set operations match naive per-example loops") {
  DeterministicRng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(50);
    const std::size_t seeds = 1 + rng.below(4);
    std::vector<std::vector<bool>> f(seeds, std::vector<bool>(n)), e(seeds, std::vector<bool>(n));
    std::vector<PredictionRecord> recs;
    for (std::size_t s = 0; s < seeds; ++s)
      for (std::size_t i = 0; i < n; ++i) {
        f[s][i] = rng.uniform01() < 0.8;
        e[s][i] = rng.uniform01() < 0.7;
        const auto seed = static_cast<std::int64_t>(s + 1);
        recs.push_back({"F", seed, "x" + std::to_string(i), f[s][i] ? "y" : "n", "y"});
        recs.push_back({"E", seed, "x" + std::to_string(i), e[s][i] ? "y" : "n", "y"});
      }
    const PredictionLog log(recs);
    std::vector<std::int64_t> seed_list;
    for (std::size_t s = 1; s <= seeds; ++s) seed_list.push_back(static_cast<std::int64_t>(s));
    const SolvableSet sf = solvable_set(log, "F", seed_list), se = solvable_set(log, "E", seed_list);

    Contingency naive;
    for (std::size_t i = 0; i < n; ++i) {
      bool in_f = true, in_e = true;
      for (std::size_t s = 0; s < seeds; ++s) {
        in_f = in_f && f[s][i];
        in_e = in_e && e[s][i];
      }
      const std::string id = "x" + std::to_string(i);
      CHECK(sf.examples.contains(id) == in_f);
      CHECK(se.examples.contains(id) == in_e);
      (in_f ? (in_e ? naive.both : naive.only_feature) : (in_e ? naive.only_structure : naive.neither))++;
    }
    const Contingency c = contingency(sf, se, log.examples());
    CHECK(c == naive);
    CHECK(c.total() == n);
    const double score = fande_score(sf, se, n);
    CHECK(score == fande_score(se, sf, n));
    CHECK(score >= 0.0);
    CHECK(score <= 1.0);

    if (seeds > 1) {
      seed_list.pop_back();
      const SolvableSet fewer = solvable_set(log, "F", seed_list);
      for (const auto& id : sf.examples) CHECK(fewer.examples.contains(id));
    }
  }
}
