#include "gpool/dataset.hpp"

#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "gpool/graph_io.hpp"

namespace gpool {
namespace {

using nlohmann::json;

constexpr std::uint64_t kAssignmentStream = 0xA55;

AttributedGraph community_graph(std::size_t communities, std::size_t per_community, std::size_t feature_dim,
                                std::size_t block, std::size_t blocks, double noise,
                                DeterministicRng& rng) {
  const std::size_t n = communities * per_community;
  Matrix x(n, feature_dim);
  const std::size_t lo = block * feature_dim / blocks;
  const std::size_t hi = (block + 1) * feature_dim / blocks;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < feature_dim; ++j) {
      x(i, j) = noise * rng.normal() + ((j >= lo && j < hi) ? 1.0 : 0.0);
    }
  }
  std::vector<Edge> edges;
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < communities; ++c) {
    const std::size_t base = c * per_community;
    for (std::size_t a = 0; a < per_community; ++a) {
      labels.push_back("c" + std::to_string(c) + "n" + std::to_string(a));
      for (std::size_t b = a + 1; b < per_community; ++b) {
        edges.push_back({base + a, base + b, {1.0, 0.0}, "member"});
      }
    }
    if (c + 1 < communities) edges.push_back({base, base + per_community, {0.0, 1.0}, "bridge"});
  }
  return AttributedGraph(std::move(x), std::move(edges), std::move(labels), true);
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

void SyntheticTaskSpec::validate() const {
  if (n_examples == 0) throw InvalidArgument("dataset spec: n_examples must be positive");
  if (communities_min < 1 || communities_max < communities_min) {
    throw InvalidArgument("dataset spec: communities_range must satisfy 1 <= min <= max");
  }
  if (nodes_per_community < 1) throw InvalidArgument("dataset spec: nodes_per_community must be positive");
  if (!feature_signal && !structure_signal) throw InvalidArgument("dataset spec: at least one signal flag required");
  if (!(redundancy_fraction >= 0.0 && redundancy_fraction <= 1.0)) {
    throw InvalidArgument("dataset spec: redundancy_fraction must lie in [0, 1]");
  }
  if (redundancy_fraction > 0.0 && !(feature_signal && structure_signal)) {
    throw InvalidArgument("dataset spec: redundancy_fraction > 0 needs both signal flags");
  }
  if (feature_dim < num_classes()) {
    throw InvalidArgument("dataset spec: feature_dim must be at least the number of classes");
  }
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) {
    throw InvalidArgument("dataset spec: noise_scale must be finite and nonnegative");
  }
}

std::vector<Example> generate_dataset(const SyntheticTaskSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t n = spec.n_examples;
  const auto dual = static_cast<std::size_t>(std::llround(spec.redundancy_fraction * static_cast<double>(n)));

  // Which examples carry both signals is drawn once from a dedicated stream.
  DeterministicRng order_rng(mix_seed(seed, kAssignmentStream));
  PermutationMap order = PermutationMap::random(n, order_rng);

  const std::size_t classes = spec.num_classes();
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t rank = order(i);
    bool feature = false;
    bool structure = false;
    if (rank < dual) {
      feature = structure = true;
    } else if (spec.feature_signal && spec.structure_signal) {
      ((rank - dual) % 2 == 0 ? feature : structure) = true;
    } else {
      feature = spec.feature_signal;
      structure = spec.structure_signal;
    }

    DeterministicRng rng(mix_seed(seed, i));
    const std::size_t label = rng.below(classes);
    const std::size_t communities = spec.communities_min + (structure ? label : rng.below(classes));
    const std::size_t block = feature ? label : rng.below(classes);

    std::ostringstream id;
    id << "ex-" << std::setw(5) << std::setfill('0') << i;
    out.push_back({id.str(),
                   community_graph(communities, spec.nodes_per_community, spec.feature_dim, block, classes,
                                   spec.noise_scale, rng),
                   label, feature, structure});
  }
  return out;
}

SyntheticTaskSpec spec_from_json(const json& j) {
  static const std::set<std::string> known = {"n_examples",        "communities_range", "nodes_per_community",
                                              "feature_dim",       "feature_signal",    "structure_signal",
                                              "redundancy_fraction", "noise_scale"};
  if (!j.is_object()) throw InvalidArgument("dataset spec must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw InvalidArgument("dataset spec: unknown key \"" + key + "\"");
  }
  SyntheticTaskSpec s;
  try {
    read_opt(j, "n_examples", s.n_examples);
    if (auto it = j.find("communities_range"); it != j.end()) {
      if (!it->is_array() || it->size() != 2) throw InvalidArgument("dataset spec: communities_range is [min, max]");
      s.communities_min = (*it)[0].get<std::size_t>();
      s.communities_max = (*it)[1].get<std::size_t>();
    }
    read_opt(j, "nodes_per_community", s.nodes_per_community);
    read_opt(j, "feature_dim", s.feature_dim);
    read_opt(j, "feature_signal", s.feature_signal);
    read_opt(j, "structure_signal", s.structure_signal);
    read_opt(j, "redundancy_fraction", s.redundancy_fraction);
    read_opt(j, "noise_scale", s.noise_scale);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("dataset spec: ") + e.what());
  }
  s.validate();
  return s;
}

json spec_to_json(const SyntheticTaskSpec& s) {
  return {{"n_examples", s.n_examples},
          {"communities_range", {s.communities_min, s.communities_max}},
          {"nodes_per_community", s.nodes_per_community},
          {"feature_dim", s.feature_dim},
          {"feature_signal", s.feature_signal},
          {"structure_signal", s.structure_signal},
          {"redundancy_fraction", s.redundancy_fraction},
          {"noise_scale", s.noise_scale}};
}

std::string write_dataset_jsonl(const std::vector<Example>& examples) {
  std::string out;
  for (const Example& e : examples) {
    json j = {{"id", e.id},
              {"label", e.label},
              {"feature_signal", e.feature_solvable},
              {"structure_signal", e.structure_solvable},
              {"graph", graph_to_json(e.graph)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<Example> read_dataset_jsonl(std::string_view text) {
  std::vector<Example> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
    const std::string where = "line " + std::to_string(line_no);
    try {
      Example ex{j.at("id").get<std::string>(), graph_from_json(j.at("graph"), where + ".graph"),
                 j.at("label").get<std::size_t>(), j.value("feature_signal", false),
                 j.value("structure_signal", false)};
      out.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what(), line_no);
    }
  }
  return out;
}

}  // namespace gpool
