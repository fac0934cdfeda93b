#pragma once

// Exact-match evaluation. All accuracies are kept as integer
// numerator/denominator pairs and only turned into ratios when reported.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stride/corpus.hpp"
#include "stride/database.hpp"
#include "stride/predict.hpp"

namespace stride {

enum class Weighting { per_variable, per_instance };

std::string_view to_string(Weighting weighting);
Weighting parse_weighting(std::string_view text);

struct EvalConfig {
  Task task = Task::names;
  Weighting weighting = Weighting::per_variable;
  // Upper bounds (inclusive) of the training-frequency buckets.
  std::vector<std::uint64_t> bucket_edges = {1, 10, 100, 1'000, 10'000, 100'000};

  void validate() const;
};

struct Tally {
  std::uint64_t correct = 0;
  std::uint64_t total = 0;

  std::optional<double> accuracy() const;
  Tally &operator+=(const Tally &other);
  friend bool operator==(const Tally &, const Tally &) = default;
};

struct NamedTally {
  std::string name;
  Tally tally;

  friend bool operator==(const NamedTally &, const NamedTally &) = default;
};

using LabelCounts = std::map<std::string, std::uint64_t, std::less<>>;
using FingerprintSet = std::set<Fingerprint>;

LabelCounts label_counts_from(const LabelTable &table);

// Everything evaluation needs to know about the training corpus.
struct TrainReference {
  std::optional<FingerprintSet> fingerprints;
  LabelCounts label_counts;
};

// One pass over a training corpus: fingerprints plus per-variable label
// counts for `task`.
TrainReference build_train_reference(CorpusReader &reader, Task task);

struct EvalReport {
  Task task = Task::names;
  Weighting weighting = Weighting::per_variable;
  // False when no training fingerprints were available.
  bool has_split = false;

  Tally overall;
  Tally in_train;
  Tally not_in_train;
  // "unseen" first, then one bucket per edge, then the open-ended bucket.
  std::vector<NamedTally> frequency_buckets;
  std::vector<NamedTally> function_size_buckets;

  std::uint64_t functions = 0;
  std::uint64_t in_train_functions = 0;
  std::uint64_t not_in_train_functions = 0;
  // Per-variable counts, independent of the weighting.
  std::uint64_t variables = 0;
  std::uint64_t abstentions = 0;
  std::uint64_t unlabeled_variables = 0;

  std::optional<double> abstention_rate() const;

  nlohmann::json to_json() const;
  std::string to_text() const;
  // size_bucket,correct,total,accuracy
  std::string function_size_csv() const;
};

// Streaming accumulator. Functions can be fed in any order.
class Evaluator {
public:
  Evaluator(EvalConfig config, TrainReference train);

  // `predictions` must all refer to variables of `record`; variables without
  // a prediction count as abstentions.
  void add(const FunctionRecord &record, std::span<const Prediction> predictions);

  EvalReport report() const { return report_; }

private:
  std::size_t frequency_bucket(std::uint64_t training_count) const;

  EvalConfig config_;
  TrainReference train_;
  EvalReport report_;
};

struct FunctionPredictions {
  std::string fn_id;
  std::vector<Prediction> predictions;
};

// Joins predictions to the corpus by fn_id. Throws if a prediction refers to
// a function or variable the corpus does not contain.
EvalReport accuracy(std::span<const FunctionPredictions> predictions,
                    std::span<const FunctionRecord> corpus, const EvalConfig &config,
                    const TrainReference &train);

inline constexpr std::uint64_t kFunctionSizeEdges[] = {50, 100, 200, 400, 800, 1600};

struct MatchRateRow {
  std::uint32_t n = 0;
  std::uint64_t contexts = 0;
  std::uint64_t matched = 0;
  std::uint64_t top1 = 0;
  std::uint64_t top3 = 0;
  std::uint64_t top5 = 0;

  std::optional<double> matched_fraction() const;
  // Among matched contexts.
  std::optional<double> top1_accuracy() const;
  std::optional<double> top3_accuracy() const;
  std::optional<double> top5_accuracy() const;

  friend bool operator==(const MatchRateRow &, const MatchRateRow &) = default;
};

// Every size is checked independently, with no largest-match shortcut. Only
// contexts that fit inside the function are counted.
class MatchRateCounter {
public:
  MatchRateCounter(const NGramDatabase &db, SizeSchedule schedule);

  void add(const FunctionRecord &record);
  const std::vector<MatchRateRow> &rows() const { return rows_; }

private:
  const NGramDatabase *db_;
  SizeSchedule schedule_;
  std::vector<MatchRateRow> rows_;
};

std::vector<MatchRateRow> match_rate_report(std::span<const FunctionRecord> test_corpus,
                                            const NGramDatabase &db,
                                            const SizeSchedule &schedule);

// n,matched,top1,top3,top5
std::string match_rate_csv(std::span<const MatchRateRow> rows);
std::string match_rate_text(std::span<const MatchRateRow> rows);
nlohmann::json match_rate_json(std::span<const MatchRateRow> rows);

} // namespace stride
