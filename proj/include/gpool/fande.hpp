#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gpool/errors.hpp"

namespace gpool {

struct PredictionRecord {
  std::string model;
  std::int64_t seed = 0;
  std::string id;
  std::string pred;
  std::string gold;
};

/// Raised when a (model, seed) run is missing predictions for some examples.
class CoverageError : public InvalidArgument {
 public:
  CoverageError(const std::string& what, std::vector<std::string> gaps)
      : InvalidArgument(what), gaps_(std::move(gaps)) {}
  const std::vector<std::string>& gaps() const noexcept { return gaps_; }

 private:
  std::vector<std::string> gaps_;
};

/// Multi-model, multi-seed predictions over a shared example set P.
class PredictionLog {
 public:
  PredictionLog() = default;
  // Rejects duplicate (model, seed, id) records.
  explicit PredictionLog(std::vector<PredictionRecord> records);

  /// One JSON object per line: {"model":str,"seed":int,"id":str,"pred":str,"gold":str}.
  static PredictionLog from_jsonl(std::string_view text);

  const std::vector<PredictionRecord>& records() const noexcept { return records_; }
  /// P: every example id that appears in the log.
  const std::set<std::string>& examples() const noexcept { return examples_; }
  std::set<std::string> models() const;
  std::set<std::int64_t> seeds(const std::string& model) const;

 private:
  std::vector<PredictionRecord> records_;
  std::set<std::string> examples_;
};

struct SolvableSet {
  std::string model;
  std::set<std::string> examples;
};

/// Labels are compared after trimming surrounding whitespace.
bool labels_match(std::string_view pred, std::string_view gold) noexcept;

/// {x ∈ P : every listed seed predicts gold}. Throws CoverageError when any
/// (seed, example) pair is missing.
SolvableSet solvable_set(const PredictionLog& log, const std::string& model, const std::vector<std::int64_t>& seeds);

/// |S_F ∩ S_E| / |P|.
double fande_score(const SolvableSet& sf, const SolvableSet& se, std::size_t p_size);

/// Quadrant counts in the order (both, only S_E, only S_F, neither).
struct Contingency {
  std::size_t both = 0;
  std::size_t only_structure = 0;  // S_E \ S_F
  std::size_t only_feature = 0;    // S_F \ S_E
  std::size_t neither = 0;

  std::size_t total() const noexcept { return both + only_structure + only_feature + neither; }
  friend bool operator==(const Contingency&, const Contingency&) = default;
};

Contingency contingency(const SolvableSet& sf, const SolvableSet& se, const std::set<std::string>& p);

inline const std::vector<std::int64_t> kDefaultFandeSeeds = {1, 2, 3, 4};

struct FandeRow {
  std::string dataset;
  std::string feature_model;
  std::string structure_model;
  Contingency counts;
  double score = 0.0;
  double rounded = 0.0;  // two decimals
};

FandeRow fande_analysis(const PredictionLog& log, const std::string& dataset, const std::string& feature_model,
                        const std::string& structure_model, const std::vector<std::int64_t>& seeds);

nlohmann::json fande_report_json(const std::vector<FandeRow>& rows);
/// Quadrant tables per (dataset, pair) followed by a pair × dataset score table.
std::string fande_report_table(const std::vector<FandeRow>& rows);

}  // namespace gpool
