#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gpool/graph.hpp"

namespace gpool {

/// Parameters of the synthetic community-graph classification task.
///
/// Each graph is a chain of cliques ("communities"). The class label can be
/// carried by the community count (structure signal) and/or by which block
/// of feature columns is raised in every node (feature signal). Exactly
/// round(redundancy_fraction * n_examples) examples carry both signals; when
/// both flags are set the rest alternate between feature-only and
/// structure-only.
struct SyntheticTaskSpec {
  std::size_t n_examples = 200;
  std::size_t communities_min = 2;
  std::size_t communities_max = 3;
  std::size_t nodes_per_community = 4;
  std::size_t feature_dim = 8;
  bool feature_signal = true;
  bool structure_signal = true;
  double redundancy_fraction = 1.0;
  double noise_scale = 0.5;

  std::size_t num_classes() const noexcept { return communities_max - communities_min + 1; }
  // Throws InvalidArgument describing the first infeasibility.
  void validate() const;
};

struct Example {
  std::string id;
  AttributedGraph graph;
  std::size_t label = 0;
  bool feature_solvable = false;
  bool structure_solvable = false;

  bool dual_tagged() const noexcept { return feature_solvable && structure_solvable; }
};

std::vector<Example> generate_dataset(const SyntheticTaskSpec& spec, std::uint64_t seed);

SyntheticTaskSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const SyntheticTaskSpec& spec);

// One JSON document per line:
//   {"id": str, "label": int, "feature_signal": bool, "structure_signal": bool, "graph": {...}}
std::string write_dataset_jsonl(const std::vector<Example>& examples);
std::vector<Example> read_dataset_jsonl(std::string_view text);

}  // namespace gpool
