#pragma once

// Local scoring and function consensus.
//
// For each occurrence of a variable and each side independently, the largest
// scheduled N-gram present in the database is looked up. Each returned label
// scores 0.5 + 0.5 * count / (sum of stored counts), and a label's consensus
// score is the sum of its local scores over all (occurrence, side) matches.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stride/corpus.hpp"
#include "stride/database.hpp"
#include "stride/ngram.hpp"

namespace stride {

struct LocalScore {
  std::uint32_t label = 0;
  double score = 0.0;
};

// Consensus scores are compared on a 1e-9 grid: sums that agree to within
// floating-point rounding are ties and fall through to training frequency.
inline constexpr double kConsensusResolution = 1e9;
std::int64_t consensus_tie_key(double score);

// Scores in EntryList order; every score lies in (0.5, 1.0].
std::vector<LocalScore> local_scores(std::span<const Entry> entries);

struct ScoredLabel {
  std::string label;
  double score = 0.0;

  friend bool operator==(const ScoredLabel &, const ScoredLabel &) = default;
};

struct LocalMatch {
  std::size_t occ_index = 0;
  Side side = Side::left;
  std::uint32_t matched_n = 0;
  std::vector<ScoredLabel> entries;

  friend bool operator==(const LocalMatch &, const LocalMatch &) = default;
};

struct Prediction {
  std::string var_key;
  // Consensus score descending, then training frequency descending, then
  // label ascending. Empty when nothing matched (abstention).
  std::vector<ScoredLabel> ranking;
  std::vector<LocalMatch> trace;

  bool abstained() const { return ranking.empty(); }
  friend bool operator==(const Prediction &, const Prediction &) = default;
};

// The record must be normalized with the database's normalization config.
Prediction predict_variable(const VariableLayout &layout, std::string_view var_key,
                            const NGramDatabase &db);
Prediction predict_variable(const FunctionRecord &record, std::string_view var_key,
                            const NGramDatabase &db);

// One prediction per variable, in first-occurrence order, each ranking cut to
// at most `top_n` labels.
std::vector<Prediction> predict_function(const FunctionRecord &record,
                                         const NGramDatabase &db, std::size_t top_n);

} // namespace stride
