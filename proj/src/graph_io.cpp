#include "gpool/graph_io.hpp"

#include <cmath>

namespace gpool {
namespace {

using nlohmann::json;

const json& field(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(where + ": missing \"" + key + "\"");
  return *it;
}

std::size_t index_value(const json& j, const std::string& where) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw ParseError(where + ": expected a nonnegative integer");
  }
  return j.get<std::size_t>();
}

std::vector<double> number_row(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of numbers");
  std::vector<double> row;
  row.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ParseError(where + "[" + std::to_string(i) + "]: expected a number");
    const double v = j[i].get<double>();
    if (!std::isfinite(v)) throw ParseError(where + "[" + std::to_string(i) + "]: non-finite value");
    row.push_back(v);
  }
  return row;
}

}  // namespace

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array of rows");
  std::vector<double> data;
  std::size_t cols = 0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    auto row = number_row(j[i], where + "[" + std::to_string(i) + "]");
    if (i == 0) cols = row.size();
    if (row.size() != cols) throw ParseError(where + ": ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(j.size(), cols, std::move(data));
}

json graph_to_json(const AttributedGraph& g) {
  json edges = json::array();
  for (const Edge& e : g.edges()) {
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"rel", e.relation}, {"feat", e.feature}});
  }
  json j = {{"n", g.node_count()},
            {"d", g.feature_dim()},
            {"features", matrix_to_json(g.features())},
            {"edges", std::move(edges)},
            {"undirected", g.undirected()}};
  if (g.labels()) j["labels"] = *g.labels();
  return j;
}

AttributedGraph graph_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  const std::size_t n = index_value(field(j, "n", where), where + ".n");
  const std::size_t d = index_value(field(j, "d", where), where + ".d");
  const json& feats = field(j, "features", where);
  if (!feats.is_array() || feats.size() != n) {
    throw ParseError(where + ".features: expected " + std::to_string(n) + " rows");
  }
  std::vector<double> data;
  data.reserve(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = number_row(feats[i], where + ".features[" + std::to_string(i) + "]");
    if (row.size() != d) {
      throw ParseError(where + ".features[" + std::to_string(i) + "]: expected width " + std::to_string(d));
    }
    data.insert(data.end(), row.begin(), row.end());
  }

  std::vector<Edge> edges;
  if (auto it = j.find("edges"); it != j.end()) {
    if (!it->is_array()) throw ParseError(where + ".edges: expected an array");
    for (std::size_t e = 0; e < it->size(); ++e) {
      const json& ej = (*it)[e];
      const std::string at = where + ".edges[" + std::to_string(e) + "]";
      if (!ej.is_object()) throw ParseError(at + ": expected an object");
      Edge edge;
      edge.src = index_value(field(ej, "src", at), at + ".src");
      edge.dst = index_value(field(ej, "dst", at), at + ".dst");
      if (edge.src >= n || edge.dst >= n) {
        throw ParseError(at + ": endpoint out of range for " + std::to_string(n) + " nodes");
      }
      if (auto r = ej.find("rel"); r != ej.end()) {
        if (!r->is_string()) throw ParseError(at + ".rel: expected a string");
        edge.relation = r->get<std::string>();
      }
      if (auto f = ej.find("feat"); f != ej.end()) edge.feature = number_row(*f, at + ".feat");
      edges.push_back(std::move(edge));
    }
  }

  std::optional<std::vector<std::string>> labels;
  if (auto it = j.find("labels"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != n) {
      throw ParseError(where + ".labels: expected " + std::to_string(n) + " strings");
    }
    labels.emplace();
    for (const auto& l : *it) {
      if (!l.is_string()) throw ParseError(where + ".labels: expected strings");
      labels->push_back(l.get<std::string>());
    }
  }
  bool undirected = true;
  if (auto it = j.find("undirected"); it != j.end()) {
    if (!it->is_boolean()) throw ParseError(where + ".undirected: expected a boolean");
    undirected = it->get<bool>();
  }
  try {
    return AttributedGraph(Matrix(n, d, std::move(data)), std::move(edges), std::move(labels), undirected);
  } catch (const Error& e) {
    throw ParseError(where + ": " + e.what());
  }
}

AttributedGraph read_graph_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed graph document: ") + e.what(), e.byte);
  }
  return graph_from_json(j);
}

std::string write_graph_json(const AttributedGraph& g) { return graph_to_json(g).dump(); }

}  // namespace gpool
