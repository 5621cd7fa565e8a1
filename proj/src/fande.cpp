#include "gpool/fande.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

namespace gpool {
namespace {

std::string_view trim(std::string_view s) noexcept {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

}  // namespace

PredictionLog::PredictionLog(std::vector<PredictionRecord> records) : records_(std::move(records)) {
  std::set<std::tuple<std::string, std::int64_t, std::string>> keys;
  for (const auto& r : records_) {
    if (!keys.emplace(r.model, r.seed, r.id).second) {
      throw InvalidArgument("duplicate prediction for model " + r.model + ", seed " + std::to_string(r.seed) +
                            ", example " + r.id);
    }
    examples_.insert(r.id);
  }
}

PredictionLog PredictionLog::from_jsonl(std::string_view text) {
  std::vector<PredictionRecord> records;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      records.push_back({j.at("model").get<std::string>(), j.at("seed").get<std::int64_t>(),
                         j.at("id").get<std::string>(), j.at("pred").get<std::string>(),
                         j.at("gold").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("prediction log line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return PredictionLog(std::move(records));
}

std::set<std::string> PredictionLog::models() const {
  std::set<std::string> out;
  for (const auto& r : records_) out.insert(r.model);
  return out;
}

std::set<std::int64_t> PredictionLog::seeds(const std::string& model) const {
  std::set<std::int64_t> out;
  for (const auto& r : records_)
    if (r.model == model) out.insert(r.seed);
  return out;
}

bool labels_match(std::string_view pred, std::string_view gold) noexcept { return trim(pred) == trim(gold); }

SolvableSet solvable_set(const PredictionLog& log, const std::string& model, const std::vector<std::int64_t>& seeds) {
  if (seeds.empty()) throw InvalidArgument("solvable_set needs at least one seed");
  // (seed, id) → correct?
  std::map<std::pair<std::int64_t, std::string>, bool> correct;
  for (const auto& r : log.records()) {
    if (r.model == model) correct[{r.seed, r.id}] = labels_match(r.pred, r.gold);
  }
  SolvableSet out{model, {}};
  std::vector<std::string> gaps;
  for (const auto& id : log.examples()) {
    bool all = true;
    for (std::int64_t seed : seeds) {
      auto it = correct.find({seed, id});
      if (it == correct.end()) {
        gaps.push_back("seed " + std::to_string(seed) + " / " + id);
        all = false;
      } else {
        all = all && it->second;
      }
    }
    if (all) out.examples.insert(id);
  }
  if (!gaps.empty()) {
    std::string msg = "model " + model + " lacks " + std::to_string(gaps.size()) + " predictions: ";
    for (std::size_t i = 0; i < std::min<std::size_t>(gaps.size(), 5); ++i) msg += (i ? ", " : "") + gaps[i];
    if (gaps.size() > 5) msg += ", ...";
    throw CoverageError(msg, std::move(gaps));
  }
  return out;
}

double fande_score(const SolvableSet& sf, const SolvableSet& se, std::size_t p_size) {
  if (p_size == 0) throw InvalidArgument("FandE needs a non-empty example set");
  std::size_t both = 0;
  for (const auto& id : sf.examples) both += se.examples.count(id);
  return static_cast<double>(both) / static_cast<double>(p_size);
}

Contingency contingency(const SolvableSet& sf, const SolvableSet& se, const std::set<std::string>& p) {
  for (const auto* set : {&sf, &se}) {
    for (const auto& id : set->examples) {
      if (!p.contains(id)) throw InvalidArgument("example " + id + " of model " + set->model + " is outside P");
    }
  }
  Contingency c;
  for (const auto& id : p) {
    const bool f = sf.examples.contains(id);
    const bool e = se.examples.contains(id);
    if (f && e) ++c.both;
    else if (e) ++c.only_structure;
    else if (f) ++c.only_feature;
    else ++c.neither;
  }
  return c;
}

FandeRow fande_analysis(const PredictionLog& log, const std::string& dataset, const std::string& feature_model,
                        const std::string& structure_model, const std::vector<std::int64_t>& seeds) {
  const SolvableSet sf = solvable_set(log, feature_model, seeds);
  const SolvableSet se = solvable_set(log, structure_model, seeds);
  FandeRow row{dataset, feature_model, structure_model, contingency(sf, se, log.examples()), 0.0, 0.0};
  row.score = fande_score(sf, se, log.examples().size());
  row.rounded = round2(row.score);
  return row;
}

nlohmann::json fande_report_json(const std::vector<FandeRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"dataset", r.dataset},
                   {"feature_model", r.feature_model},
                   {"structure_model", r.structure_model},
                   {"both", r.counts.both},
                   {"only_structure", r.counts.only_structure},
                   {"only_feature", r.counts.only_feature},
                   {"neither", r.counts.neither},
                   {"examples", r.counts.total()},
                   {"fande", r.score},
                   {"fande_rounded", r.rounded}});
  }
  return {{"fande", out}};
}

std::string fande_report_table(const std::vector<FandeRow>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) {
    const std::string f = "S_F(" + r.feature_model + ")";
    const std::string nf = "not S_F(" + r.feature_model + ")";
    out << r.dataset << ": " << r.feature_model << " vs " << r.structure_model << '\n';
    out << "  " << std::left << std::setw(24) << "" << std::right << std::setw(22) << f << std::setw(26) << nf << '\n';
    out << "  " << std::left << std::setw(24) << ("S_E(" + r.structure_model + ")") << std::right << std::setw(22)
        << r.counts.both << std::setw(26) << r.counts.only_structure << '\n';
    out << "  " << std::left << std::setw(24) << ("not S_E(" + r.structure_model + ")") << std::right
        << std::setw(22) << r.counts.only_feature << std::setw(26) << r.counts.neither << '\n';
    out << "  FandE = " << fixed(r.score, 6) << " (" << fixed(r.rounded, 2) << ")\n\n";
  }

  // Pair × dataset summary, in first-seen order.
  std::vector<std::string> datasets, pairs;
  std::map<std::pair<std::string, std::string>, double> cell;
  for (const auto& r : rows) {
    const std::string pair = r.feature_model + " and " + r.structure_model;
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
    if (std::find(pairs.begin(), pairs.end(), pair) == pairs.end()) pairs.push_back(pair);
    cell[{pair, r.dataset}] = r.rounded;
  }
  out << std::left << std::setw(28) << "Model pair (S_F and S_E)";
  for (const auto& d : datasets) out << std::right << std::setw(14) << d;
  out << '\n';
  for (const auto& p : pairs) {
    out << std::left << std::setw(28) << p;
    for (const auto& d : datasets) {
      auto it = cell.find({p, d});
      out << std::right << std::setw(14) << (it == cell.end() ? std::string("-") : fixed(it->second, 2));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace gpool
