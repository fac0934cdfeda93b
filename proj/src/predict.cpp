#include "stride/predict.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "stride/error.hpp"

namespace stride {

std::vector<LocalScore> local_scores(std::span<const Entry> entries) {
  std::uint64_t total = 0;
  for (const auto &e : entries)
    total += e.count;
  std::vector<LocalScore> out;
  out.reserve(entries.size());
  for (const auto &e : entries) {
    double share = total == 0 ? 0.0
                              : static_cast<double>(e.count) / static_cast<double>(total);
    out.push_back({e.label, 0.5 + 0.5 * share});
  }
  return out;
}

std::int64_t consensus_tie_key(double score) {
  return std::llround(score * kConsensusResolution);
}

Prediction predict_variable(const VariableLayout &layout, std::string_view var_key,
                            const NGramDatabase &db) {
  auto slot = layout.find(var_key);
  if (!slot)
    throw Error("function '" + layout.record().fn_id + "' has no variable '" +
                std::string(var_key) + "'");

  Prediction prediction;
  prediction.var_key = std::string(var_key);
  std::map<std::uint32_t, double> consensus;
  std::string scratch;

  for (auto occ : layout.occurrences(*slot)) {
    for (auto side : kSides) {
      for (auto n : db.config().schedule.sizes()) {
        auto window = extract_window(layout, occ, side, n);
        if (!window)
          continue;
        auto entries = db.lookup(window_key(*window, side, scratch));
        if (!entries)
          continue;
        LocalMatch match{occ, side, n, {}};
        for (const auto &s : local_scores(*entries)) {
          consensus[s.label] += s.score;
          match.entries.push_back({db.labels().label(s.label), s.score});
        }
        prediction.trace.push_back(std::move(match));
        break;
      }
    }
  }

  struct Ranked {
    std::uint32_t label;
    double score;
    std::int64_t tie_key;
    std::uint64_t frequency;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(consensus.size());
  for (const auto &[label, total] : consensus)
    ranked.push_back({label, total, consensus_tie_key(total), db.labels().global_count(label)});
  std::sort(ranked.begin(), ranked.end(), [](const Ranked &a, const Ranked &b) {
    if (a.tie_key != b.tie_key)
      return a.tie_key > b.tie_key;
    if (a.frequency != b.frequency)
      return a.frequency > b.frequency;
    return a.label < b.label;
  });
  prediction.ranking.reserve(ranked.size());
  for (const auto &r : ranked)
    prediction.ranking.push_back({db.labels().label(r.label), r.score});
  return prediction;
}

Prediction predict_variable(const FunctionRecord &record, std::string_view var_key,
                            const NGramDatabase &db) {
  VariableLayout layout(record);
  return predict_variable(layout, var_key, db);
}

std::vector<Prediction> predict_function(const FunctionRecord &record,
                                         const NGramDatabase &db, std::size_t top_n) {
  if (top_n < 1)
    throw Error("top_n must be at least 1");
  VariableLayout layout(record);
  std::vector<Prediction> out;
  out.reserve(layout.var_keys().size());
  for (const auto &var_key : layout.var_keys()) {
    auto prediction = predict_variable(layout, var_key, db);
    if (prediction.ranking.size() > top_n)
      prediction.ranking.resize(top_n);
    out.push_back(std::move(prediction));
  }
  return out;
}

} // namespace stride
