#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "gpool/graph.hpp"

namespace gpool {

// Schema:
//   { "n": int, "d": int, "features": [[f64]],
//     "edges": [{"src": int, "dst": int, "rel": str, "feat": [f64]}],
//     "labels": [str], "undirected": bool }
// "labels" is optional; "rel" and "feat" default to "" and [].
AttributedGraph read_graph_json(std::string_view text);
std::string write_graph_json(const AttributedGraph& g);

nlohmann::json graph_to_json(const AttributedGraph& g);
// `where` prefixes error messages (e.g. "line 12").
AttributedGraph graph_from_json(const nlohmann::json& j, const std::string& where = "graph");

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& where);

}  // namespace gpool
