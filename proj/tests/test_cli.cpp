#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "gpool/cli.hpp"
#include "gpool/dataset.hpp"
#include "gpool/graph_io.hpp"

namespace fs = std::filesystem;
using namespace gpool;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("gpool-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name, const std::string& contents) const {
    const std::string p = (path / name).string();
    cli::write_file_atomic(p, contents);
    return p;
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

std::string path_graph_json() {
  const AttributedGraph g(Matrix{{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}}, {{0, 1, {}, "r"}, {1, 2, {}, "r"}},
                          std::vector<std::string>{"a", "b", "c"});
  return graph_to_json(g).dump();
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(invoke({}).code == cli::usage);
  CHECK(invoke({"bogus"}).code == cli::usage);
  CHECK(invoke({"pool"}).code == cli::usage);
  CHECK(invoke({"--help"}).code == cli::ok);
}

TEST_CASE("generate is reproducible and reports redundancy") {
  TempDir dir;
  const std::string spec = dir.file("spec.json", R"({"n_examples": 20, "redundancy_fraction": 1.0})");
  const Outcome a = invoke({"generate", "--config", spec, "--seed", "4", "--out", dir / "a.jsonl"});
  REQUIRE(a.code == cli::ok);
  CHECK(a.out.find("(100.0%)") != std::string::npos);
  invoke({"generate", "--config", spec, "--seed", "4", "--out", dir / "b.jsonl"});
  CHECK(cli::read_file(dir / "a.jsonl") == cli::read_file(dir / "b.jsonl"));
  CHECK(read_dataset_jsonl(cli::read_file(dir / "a.jsonl")).size() == 20);

  const std::string missing = dir / "nope/out.jsonl";
  CHECK(invoke({"generate", "--config", spec, "--out", missing}).code != cli::ok);
  CHECK_FALSE(fs::exists(missing));

  const std::string bad = dir.file("bad.json", R"({"n_examples": 0})");
  const Outcome b = invoke({"generate", "--config", bad, "--out", dir / "c.jsonl"});
  CHECK(b.code == cli::usage);
  CHECK_FALSE(b.err.empty());
  CHECK_FALSE(fs::exists(dir / "c.jsonl"));
}

TEST_CASE("retrieve reports objectives") {
  TempDir dir;
  const std::string graph = dir.file("g.json", path_graph_json());
  const std::string prizes = dir.file("p.json", R"({"prizes": [3, 0, 3], "edge_costs": [1, 1]})");
  const Outcome a = invoke({"retrieve", "--graph", graph, "--prizes", prizes, "--oracle", "--out", dir / "sub.json"});
  REQUIRE(a.code == cli::ok);
  CHECK(a.out.find("objective 4") != std::string::npos);
  CHECK(a.out.find("ratio 1") != std::string::npos);
  CHECK(fs::exists(dir / "sub.json"));

  const Outcome zero = invoke({"retrieve", "--graph", graph, "--query", "[1, 0]", "--top-n", "0"});
  REQUIRE(zero.code == cli::ok);
  CHECK(zero.out.find("objective 0") != std::string::npos);

  CHECK(invoke({"retrieve", "--graph", graph, "--query", "[1, 0, 0]"}).code == cli::data);
}

TEST_CASE("pool with mean emits one token row") {
  TempDir dir;
  const std::string graph = dir.file("g.json", path_graph_json());
  const Outcome csv = invoke({"pool", "--graph", graph, "--operator", "mean", "--format", "csv"});
  REQUIRE(csv.code == cli::ok);
  std::size_t lines = 0;
  for (char ch : csv.out) lines += ch == '\n';
  CHECK(lines == 1);
  const Outcome again = invoke({"pool", "--graph", graph, "--operator", "mean", "--format", "csv"});
  CHECK(again.out == csv.out);
  CHECK(invoke({"pool", "--graph", graph, "--operator", "max"}).code == cli::usage);
}

TEST_CASE("fande reproduces the reference scores") {
  const Outcome a = invoke({"fande"});
  REQUIRE(a.code == cli::ok);
  for (const char* v : {"0.57", "0.49", "0.64", "0.50"}) CHECK(a.out.find(v) != std::string::npos);
  CHECK(a.out.find("315") != std::string::npos);
  CHECK(invoke({"fande", "--seeds", "1,2,9"}).code == cli::data);
}

TEST_CASE("gradcheck prints PASS for a default config") {
  const Outcome a = invoke({"gradcheck", "--operator", "mean", "--encoder", "gcn"});
  REQUIRE(a.code == cli::ok);
  CHECK(a.out.find("PASS max_rel_err=") != std::string::npos);
}

TEST_CASE("train and report round-trip through files") {
  TempDir dir;
  const std::string spec = dir.file("spec.json", R"({"n_examples": 8, "feature_dim": 4})");
  REQUIRE(invoke({"generate", "--config", spec, "--out", dir / "d.jsonl"}).code == cli::ok);
  for (std::string regime : {"frozen", "adapted"}) {
    const Outcome t = invoke({"train", "--data", dir / "d.jsonl", "--operator", "topk", "--regime", regime, "--seeds",
                              "1,2", "--epochs", "2", "--out", dir / (regime + ".json")});
    REQUIRE(t.code == cli::ok);
  }
  const Outcome r = invoke({"report", dir / "frozen.json", dir / "adapted.json", "--format", "csv"});
  REQUIRE(r.code == cli::ok);
  CHECK(r.out.find("topk") != std::string::npos);
  CHECK(invoke({"report", dir / "d.jsonl"}).code == cli::data);
}
