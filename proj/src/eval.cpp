#include "stride/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "stride/error.hpp"

namespace stride {

using nlohmann::json;

namespace {

json ratio_json(const std::optional<double> &value) {
  return value ? json(*value) : json(nullptr);
}

json tally_json(const Tally &t) {
  return {{"correct", t.correct}, {"total", t.total}, {"accuracy", ratio_json(t.accuracy())}};
}

std::string percent(const std::optional<double> &value) {
  if (!value)
    return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *value * 100.0);
  return buf;
}

std::string fraction(const std::optional<double> &value) {
  if (!value)
    return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", *value);
  return buf;
}

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0)
    return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string range_name(std::uint64_t lo, std::uint64_t hi) {
  return lo == hi ? std::to_string(lo) : std::to_string(lo) + "-" + std::to_string(hi);
}

std::vector<NamedTally> make_buckets(std::span<const std::uint64_t> edges) {
  std::vector<NamedTally> buckets;
  std::uint64_t lo = 1;
  for (auto edge : edges) {
    buckets.push_back({range_name(lo, edge), {}});
    lo = edge + 1;
  }
  buckets.push_back({std::to_string(lo) + "+", {}});
  return buckets;
}

std::size_t bucket_index(std::span<const std::uint64_t> edges, std::uint64_t value) {
  auto it = std::lower_bound(edges.begin(), edges.end(), value);
  return static_cast<std::size_t>(it - edges.begin());
}

} // namespace

std::string_view to_string(Weighting weighting) {
  return weighting == Weighting::per_instance ? "per_instance" : "per_variable";
}

Weighting parse_weighting(std::string_view text) {
  if (text == "per_variable")
    return Weighting::per_variable;
  if (text == "per_instance")
    return Weighting::per_instance;
  throw Error("unknown weighting '" + std::string(text) +
              "' (expected per_variable or per_instance)");
}

void EvalConfig::validate() const {
  for (std::size_t i = 0; i < bucket_edges.size(); ++i) {
    if (bucket_edges[i] == 0 || (i > 0 && bucket_edges[i] <= bucket_edges[i - 1]))
      throw Error("frequency bucket edges must be positive and strictly increasing");
  }
}

std::optional<double> Tally::accuracy() const { return ratio(correct, total); }

Tally &Tally::operator+=(const Tally &other) {
  correct += other.correct;
  total += other.total;
  return *this;
}

LabelCounts label_counts_from(const LabelTable &table) {
  LabelCounts counts;
  for (std::size_t i = 0; i < table.size(); ++i)
    counts.emplace(table.labels()[i], table.counts()[i]);
  return counts;
}

TrainReference build_train_reference(CorpusReader &reader, Task task) {
  TrainReference train;
  train.fingerprints.emplace();
  while (auto record = reader.next()) {
    train.fingerprints->insert(function_fingerprint(*record));
    for (const auto &[key, label] : record->labels) {
      if (const auto &value = label.for_task(task))
        ++train.label_counts[*value];
    }
  }
  return train;
}

std::optional<double> EvalReport::abstention_rate() const {
  return ratio(abstentions, variables);
}

json EvalReport::to_json() const {
  json buckets = json::array();
  for (const auto &b : frequency_buckets)
    buckets.push_back({{"bucket", b.name}, {"tally", tally_json(b.tally)}});
  json sizes = json::array();
  for (const auto &b : function_size_buckets)
    sizes.push_back({{"bucket", b.name}, {"tally", tally_json(b.tally)}});
  json j = {{"task", to_string(task)},
            {"weighting", to_string(weighting)},
            {"overall", tally_json(overall)},
            {"frequency_buckets", std::move(buckets)},
            {"function_size_buckets", std::move(sizes)},
            {"functions", functions},
            {"variables", variables},
            {"abstentions", abstentions},
            {"abstention_rate", ratio_json(abstention_rate())},
            {"unlabeled_variables", unlabeled_variables}};
  if (has_split) {
    j["in_train"] = tally_json(in_train);
    j["not_in_train"] = tally_json(not_in_train);
    j["in_train_functions"] = in_train_functions;
    j["not_in_train_functions"] = not_in_train_functions;
  }
  return j;
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << "task: " << to_string(task) << "   weighting: " << to_string(weighting) << '\n';
  out << "functions: " << functions << "   variables: " << variables
      << "   abstentions: " << abstentions << " (" << percent(abstention_rate()) << "%)\n\n";
  auto row = [&](const std::string &name, const Tally &t) {
    out << std::left << std::setw(16) << name << std::right << std::setw(10)
        << percent(t.accuracy()) << std::setw(12) << t.correct << std::setw(12) << t.total
        << '\n';
  };
  out << std::left << std::setw(16) << "split" << std::right << std::setw(10) << "acc(%)"
      << std::setw(12) << "correct" << std::setw(12) << "total" << '\n';
  row("overall", overall);
  if (has_split) {
    row("in_train", in_train);
    row("not_in_train", not_in_train);
  }
  out << '\n'
      << std::left << std::setw(16) << "train freq" << std::right << std::setw(10)
      << "acc(%)" << std::setw(12) << "correct" << std::setw(12) << "total" << '\n';
  for (const auto &b : frequency_buckets)
    row(b.name, b.tally);
  return out.str();
}

std::string EvalReport::function_size_csv() const {
  std::string out = "size_bucket,correct,total,accuracy\n";
  for (const auto &b : function_size_buckets) {
    out += b.name + "," + std::to_string(b.tally.correct) + "," +
           std::to_string(b.tally.total) + "," + fraction(b.tally.accuracy()) + "\n";
  }
  return out;
}

Evaluator::Evaluator(EvalConfig config, TrainReference train)
    : config_(std::move(config)), train_(std::move(train)) {
  config_.validate();
  report_.task = config_.task;
  report_.weighting = config_.weighting;
  report_.has_split = train_.fingerprints.has_value();
  report_.frequency_buckets.push_back({"unseen", {}});
  for (auto &b : make_buckets(config_.bucket_edges))
    report_.frequency_buckets.push_back(std::move(b));
  report_.function_size_buckets = make_buckets(kFunctionSizeEdges);
}

std::size_t Evaluator::frequency_bucket(std::uint64_t training_count) const {
  if (training_count == 0)
    return 0;
  return 1 + bucket_index(config_.bucket_edges, training_count);
}

void Evaluator::add(const FunctionRecord &record, std::span<const Prediction> predictions) {
  VariableLayout layout(record);
  std::unordered_map<std::string_view, const Prediction *> by_var;
  for (const auto &p : predictions) {
    if (!layout.find(p.var_key))
      throw Error("prediction for function '" + record.fn_id +
                  "' refers to unknown variable '" + p.var_key + "'");
    by_var[p.var_key] = &p;
  }

  bool in_train = false;
  if (report_.has_split) {
    in_train = train_.fingerprints->contains(function_fingerprint(record));
    ++(in_train ? report_.in_train_functions : report_.not_in_train_functions);
  }
  ++report_.functions;
  auto size_bucket = bucket_index(kFunctionSizeEdges, std::max<std::size_t>(record.tokens.size(), 1));

  for (std::uint32_t slot = 0; slot < layout.var_keys().size(); ++slot) {
    const auto &var_key = layout.var_keys()[slot];
    const auto &truth = record.labels.find(var_key)->second.for_task(config_.task);
    if (!truth) {
      ++report_.unlabeled_variables;
      continue;
    }
    ++report_.variables;

    auto it = by_var.find(var_key);
    const Prediction *prediction = it == by_var.end() ? nullptr : it->second;
    bool abstained = prediction == nullptr || prediction->ranking.empty();
    if (abstained)
      ++report_.abstentions;
    bool correct = !abstained && prediction->ranking.front().label == *truth;

    std::uint64_t weight = config_.weighting == Weighting::per_instance
                               ? layout.occurrences(slot).size()
                               : 1;
    Tally outcome{correct ? weight : 0, weight};
    report_.overall += outcome;
    if (report_.has_split)
      (in_train ? report_.in_train : report_.not_in_train) += outcome;

    auto count_it = train_.label_counts.find(*truth);
    std::uint64_t training_count = count_it == train_.label_counts.end() ? 0 : count_it->second;
    report_.frequency_buckets[frequency_bucket(training_count)].tally += outcome;
    report_.function_size_buckets[size_bucket].tally += outcome;
  }
}

EvalReport accuracy(std::span<const FunctionPredictions> predictions,
                    std::span<const FunctionRecord> corpus, const EvalConfig &config,
                    const TrainReference &train) {
  std::unordered_map<std::string_view, const FunctionPredictions *> by_fn;
  for (const auto &fp : predictions) {
    if (!by_fn.emplace(fp.fn_id, &fp).second)
      throw Error("duplicate predictions for function '" + fp.fn_id + "'");
  }
  Evaluator evaluator(config, train);
  std::size_t joined = 0;
  for (const auto &record : corpus) {
    auto it = by_fn.find(record.fn_id);
    if (it == by_fn.end()) {
      evaluator.add(record, {});
    } else {
      ++joined;
      evaluator.add(record, it->second->predictions);
    }
  }
  if (joined != by_fn.size()) {
    std::set<std::string_view> known;
    for (const auto &record : corpus)
      known.insert(record.fn_id);
    for (const auto &fp : predictions) {
      if (!known.contains(fp.fn_id))
        throw Error("prediction refers to unknown function '" + fp.fn_id + "'");
    }
  }
  return evaluator.report();
}

std::optional<double> MatchRateRow::matched_fraction() const { return ratio(matched, contexts); }
std::optional<double> MatchRateRow::top1_accuracy() const { return ratio(top1, matched); }
std::optional<double> MatchRateRow::top3_accuracy() const { return ratio(top3, matched); }
std::optional<double> MatchRateRow::top5_accuracy() const { return ratio(top5, matched); }

MatchRateCounter::MatchRateCounter(const NGramDatabase &db, SizeSchedule schedule)
    : db_(&db), schedule_(std::move(schedule)) {
  for (auto n : schedule_.sizes())
    rows_.push_back({n, 0, 0, 0, 0, 0});
}

void MatchRateCounter::add(const FunctionRecord &record) {
  VariableLayout layout(record);
  std::string scratch;
  const auto task = db_->config().task;
  for (std::uint32_t slot = 0; slot < layout.var_keys().size(); ++slot) {
    const auto &truth = record.labels.find(layout.var_keys()[slot])->second.for_task(task);
    if (!truth)
      continue;
    auto truth_id = db_->labels().find(*truth);
    for (auto occ : layout.occurrences(slot)) {
      for (auto side : kSides) {
        for (std::size_t i = 0; i < schedule_.size(); ++i) {
          auto window = extract_window(layout, occ, side, schedule_.sizes()[i]);
          if (!window)
            continue;
          auto &row = rows_[i];
          ++row.contexts;
          auto entries = db_->lookup(window_key(*window, side, scratch));
          if (!entries)
            continue;
          ++row.matched;
          if (!truth_id)
            continue;
          for (std::size_t rank = 0; rank < entries->size(); ++rank) {
            if ((*entries)[rank].label != *truth_id)
              continue;
            row.top1 += rank < 1;
            row.top3 += rank < 3;
            row.top5 += rank < 5;
            break;
          }
        }
      }
    }
  }
}

std::vector<MatchRateRow> match_rate_report(std::span<const FunctionRecord> test_corpus,
                                            const NGramDatabase &db,
                                            const SizeSchedule &schedule) {
  MatchRateCounter counter(db, schedule);
  for (const auto &record : test_corpus)
    counter.add(record);
  return counter.rows();
}

std::string match_rate_csv(std::span<const MatchRateRow> rows) {
  std::string out = "n,matched,top1,top3,top5\n";
  for (const auto &r : rows) {
    out += std::to_string(r.n) + "," + fraction(r.matched_fraction()) + "," +
           fraction(r.top1_accuracy()) + "," + fraction(r.top3_accuracy()) + "," +
           fraction(r.top5_accuracy()) + "\n";
  }
  return out;
}

std::string match_rate_text(std::span<const MatchRateRow> rows) {
  std::ostringstream out;
  out << std::setw(4) << "N" << std::setw(12) << "matched(%)" << std::setw(10) << "top1(%)"
      << std::setw(10) << "top3(%)" << std::setw(10) << "top5(%)" << std::setw(12)
      << "contexts" << '\n';
  for (const auto &r : rows) {
    out << std::setw(4) << r.n << std::setw(12) << percent(r.matched_fraction())
        << std::setw(10) << percent(r.top1_accuracy()) << std::setw(10)
        << percent(r.top3_accuracy()) << std::setw(10) << percent(r.top5_accuracy())
        << std::setw(12) << r.contexts << '\n';
  }
  return out.str();
}

json match_rate_json(std::span<const MatchRateRow> rows) {
  json out = json::array();
  for (const auto &r : rows) {
    out.push_back({{"n", r.n},
                   {"contexts", r.contexts},
                   {"matched", r.matched},
                   {"top1", r.top1},
                   {"top3", r.top3},
                   {"top5", r.top5},
                   {"matched_fraction", ratio_json(r.matched_fraction())},
                   {"top1_accuracy", ratio_json(r.top1_accuracy())},
                   {"top3_accuracy", ratio_json(r.top3_accuracy())},
                   {"top5_accuracy", ratio_json(r.top5_accuracy())}});
  }
  return out;
}

} // namespace stride
