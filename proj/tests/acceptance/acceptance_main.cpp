// Acceptance suite: one [PASS]/[FAIL] line per criterion, nonzero exit on
// any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stride/cli.hpp"
#include "stride/eval.hpp"
#include "stride/predict.hpp"
#include "support/reference.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

namespace {

using namespace stride;
using Tokens = std::vector<Token>;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string &what) {
    if (!ok) {
      pass = false;
      if (!detail.empty())
        detail += "; ";
      detail += what;
    }
  }
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char *format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, value);
  return buf;
}

DatabaseConfig config_for(Task task, SizeSchedule schedule, std::uint32_t k = kDefaultTopK) {
  return DatabaseConfig{task, std::move(schedule), k, NormalizationConfig{}.digest()};
}

NGramDatabase build(const std::vector<FunctionRecord> &corpus, const DatabaseConfig &config) {
  DatabaseBuilder builder(config);
  for (const auto &r : corpus)
    builder.add(r);
  return builder.finalize();
}

Outcome ac1_worked_scores() {
  Outcome o;
  std::vector<Entry> entries = {{0, 360}, {1, 148}, {2, 138}, {3, 137}, {4, 108}};
  const double expected[] = {0.702, 0.583, 0.577, 0.577, 0.561};
  auto scores = local_scores(entries);
  o.require(scores.size() == 5, "expected five scores");
  std::string got;
  for (std::size_t i = 0; i < scores.size() && i < 5; ++i) {
    o.require(scores[i].label == i, "order changed");
    o.require(std::fabs(scores[i].score - expected[i]) <= 0.001,
              "score " + std::to_string(i) + " off");
    got += (i ? " " : "") + fmt("%.3f", scores[i].score);
  }
  if (o.pass)
    o.detail = got;
  return o;
}

Outcome ac2_normalization_goldens() {
  Outcome o;
  NormalizationConfig config;
  o.require(normalize_token("0x1234", config) == "NUM_4", "0x1234");
  o.require(normalize_token("0x114b28", config) == "NUM_6", "0x114b28");
  o.require(canonicalize(Tokens{"a1", "*", "a2"}, std::vector<WindowVar>{{0, "a1"}, {2, "a2"}}) ==
                Tokens{"@var_1@", "*", "@var_2@"},
            "a1 * a2");
  o.require(canonicalize(Tokens{"r3", "*", "r3"}, std::vector<WindowVar>{{0, "r3"}, {2, "r3"}}) ==
                Tokens{"@var_1@", "*", "@var_1@"},
            "r3 * r3");
  if (o.pass)
    o.detail = "4/4 goldens";
  return o;
}

Outcome ac3_oracle_equivalence() {
  Outcome o;
  auto start = Clock::now();
  std::size_t compared = 0, divergences = 0;
  const auto sizes = SizeSchedule::default_sizes();
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    testing::SyntheticLanguage lang(1000 + seed, {.vocab_size = 50, .min_vars = 1, .max_vars = 6});
    auto train = lang.functions(200, "t");
    auto test = lang.functions(70, "q");
    auto copies = lang.near_copies(train, 30, 3, "c");
    test.insert(test.end(), copies.begin(), copies.end());

    auto db = build(train, config_for(Task::names, SizeSchedule(sizes)));
    testing::ReferenceModel ref(Task::names, sizes, kDefaultTopK);
    ref.train(train);
    for (const auto &record : test) {
      for (const auto &p : predict_function(record, db, 1)) {
        ++compared;
        std::optional<std::string> got;
        if (!p.abstained())
          got = p.ranking.front().label;
        if (got != ref.top1(record, p.var_key))
          ++divergences;
      }
    }
  }
  double elapsed = seconds_since(start);
  o.require(divergences == 0, std::to_string(divergences) + " divergences");
  o.require(elapsed < 60.0, "took " + fmt("%.1f s", elapsed));
  o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(compared) +
              " variables over 20 corpora, " + std::to_string(divergences) + " divergences, " +
              fmt("%.1f s", elapsed);
  return o;
}

Outcome ac4_memorization() {
  Outcome o;
  auto corpus = testing::conflict_free_corpus(404, 300);
  auto db = build(corpus, config_for(Task::names, SizeSchedule()));
  Evaluator evaluator({Task::names, Weighting::per_variable}, {{}, label_counts_from(db.labels())});
  for (const auto &record : corpus)
    evaluator.add(record, predict_function(record, db, 1));
  auto report = evaluator.report();
  o.require(report.overall.total > 0, "no variables");
  o.require(report.overall.correct == report.overall.total,
            std::to_string(report.overall.total - report.overall.correct) + " wrong");
  o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(report.overall.correct) + "/" +
              std::to_string(report.overall.total) + " correct";
  return o;
}

int run_cli(std::vector<std::string> args, std::string &err_text) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  err_text = err.str();
  return code;
}

Outcome ac5_determinism() {
  Outcome o;
  testing::TempDir dir;
  testing::SyntheticLanguage lang(55);
  auto corpus = lang.functions(300, "f");
  auto test = lang.functions(80, "q");
  write_corpus(dir / "test.jsonl", test);

  std::string err, reference;
  std::mt19937_64 rng(5);
  int runs = 0;
  for (int perm = 0; perm < 3; ++perm) {
    if (perm > 0)
      std::shuffle(corpus.begin(), corpus.end(), rng);
    auto corpus_path = dir / ("train" + std::to_string(perm) + ".jsonl");
    write_corpus(corpus_path, corpus);
    for (const char *workers : {"1", "2", "4"}) {
      auto db_path = (dir / ("db_" + std::to_string(perm) + "_" + workers)).string();
      if (run_cli({"train", "-c", corpus_path.string(), "-o", db_path, "-j", workers}, err) != 0) {
        o.require(false, "train failed: " + err);
        return o;
      }
      auto bytes = testing::read_file(db_path);
      if (reference.empty())
        reference = bytes;
      o.require(bytes == reference, "database differs (permutation " + std::to_string(perm) +
                                        ", " + workers + " workers)");
      ++runs;
    }
  }

  std::string first_predictions;
  auto db_path = (dir / "db_0_1").string();
  for (const char *workers : {"1", "1", "3"}) {
    auto out_path = (dir / "pred.jsonl").string();
    if (run_cli({"predict", "-d", db_path, "-c", (dir / "test.jsonl").string(), "-o", out_path,
                 "-j", workers, "--explain"},
                err) != 0) {
      o.require(false, "predict failed: " + err);
      return o;
    }
    auto text = testing::read_file(out_path);
    if (first_predictions.empty())
      first_predictions = text;
    o.require(text == first_predictions, "prediction output differs");
  }
  if (o.pass)
    o.detail = std::to_string(runs) + " training runs byte-identical, 3 prediction runs identical";
  return o;
}

Outcome ac6_tie_break() {
  Outcome o;
  DatabaseBuilder builder(config_for(Task::names, SizeSchedule({1})));
  int next = 0;
  auto add = [&](const std::string &context, const std::string &label, int times) {
    for (int i = 0; i < times; ++i) {
      FunctionRecord r;
      r.fn_id = "f" + std::to_string(next);
      r.tokens = {context, "v", "u" + std::to_string(next++)};
      r.var_occurrences = {{1, "v"}};
      r.labels["v"] = {label, std::nullopt};
      builder.add(r);
    }
  };
  add("k", "buffer_str", 1);
  add("k", "buffer", 1);
  add("other", "buffer", 99);
  add("other", "buffer_str", 6);
  auto db = builder.finalize();

  FunctionRecord query;
  query.fn_id = "q";
  query.tokens = {"k", "v"};
  query.var_occurrences = {{1, "v"}};
  query.labels["v"] = {};
  auto p = predict_variable(query, "v", db);
  o.require(db.labels().global_count("buffer") == 100 &&
                db.labels().global_count("buffer_str") == 7,
            "global counts not 100/7");
  o.require(p.ranking.size() == 2, "expected two candidates");
  if (p.ranking.size() == 2) {
    o.require(p.ranking[0].score == p.ranking[1].score, "scores not tied");
    o.require(p.ranking[0].label == "buffer", "ranked " + p.ranking[0].label + " first");
  }
  if (o.pass)
    o.detail = "buffer (100) ranked above buffer_str (7) at score " + fmt("%.3f", p.ranking[0].score);
  return o;
}

Outcome ac7_match_rate_shape() {
  Outcome o;
  testing::SyntheticLanguage lang(777, {.min_tokens = 90});
  auto train = lang.functions(400, "t");
  auto test = lang.near_copies(train, 150, 6, "c");
  auto fresh = lang.functions(150, "q");
  test.insert(test.end(), fresh.begin(), fresh.end());

  SizeSchedule schedule;
  auto db = build(train, config_for(Task::names, schedule));
  auto rows = match_rate_report(test, db, schedule);

  // Schedule is descending; walk from the smallest n to the largest.
  std::reverse(rows.begin(), rows.end());
  int matched_inversions = 0, top1_inversions = 0;
  std::string table;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto matched = rows[i].matched_fraction();
    auto top1 = rows[i].top1_accuracy();
    o.require(matched.has_value() && top1.has_value(), "n=" + std::to_string(rows[i].n) + " has no data");
    if (!matched || !top1)
      continue;
    table += (i ? " " : "") + std::to_string(rows[i].n) + ":" + fmt("%.2f", *matched) + "/" +
             fmt("%.2f", *top1);
    if (i == 0 || !rows[i - 1].top1_accuracy())
      continue;
    if (*matched > *rows[i - 1].matched_fraction())
      ++matched_inversions;
    if (*top1 < *rows[i - 1].top1_accuracy())
      ++top1_inversions;
  }
  o.require(matched_inversions <= 2, std::to_string(matched_inversions) + " matched inversions");
  o.require(top1_inversions <= 2, std::to_string(top1_inversions) + " top-1 inversions");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("inversions matched=") +
              std::to_string(matched_inversions) + " top1=" + std::to_string(top1_inversions) +
              " [n:matched/top1 " + table + "]";
  return o;
}

Outcome ac8_throughput() {
  Outcome o;
  testing::SyntheticLanguage lang(888, {.min_tokens = 200});
  auto train = lang.functions(600, "t");
  auto test = lang.functions(300, "q");
  auto db = build(train, config_for(Task::names, SizeSchedule()));

  std::size_t tokens = 0;
  for (const auto &r : test)
    tokens += r.tokens.size();
  std::size_t predictions = 0;
  auto start = Clock::now();
  for (const auto &record : test)
    predictions += predict_function(record, db, 5).size();
  double elapsed = seconds_since(start);
  double rate = static_cast<double>(test.size()) / std::max(elapsed, 1e-9);
  o.require(predictions > 0, "no predictions");
  o.require(rate >= 50.0, "only " + fmt("%.1f", rate) + " functions/s");
  o.detail += (o.detail.empty() ? "" : "; ") + fmt("%.0f functions/s", rate) + ", " +
              fmt("%.3f ms/function", 1000.0 * elapsed / static_cast<double>(test.size())) +
              ", mean " + std::to_string(tokens / test.size()) + " tokens";
  return o;
}

Outcome ac9_hash_stability() {
  Outcome o;
  struct Golden {
    Tokens tokens;
    Side side;
    const char *hex;
  };
  const Golden goldens[] = {
      {{"a"}, Side::left, "5bf7b6c9c795f4d79bec85c1"},
      {{"@var_1@", "*", "@var_2@"}, Side::right, "29e89400d60457390cd6098a"},
      {{"if", "(", "NUM_6", ")"}, Side::left, "f8cc142a4e8acb61cfe32f47"},
  };
  for (const auto &g : goldens) {
    auto got = hash_ngram(g.tokens, g.side).hex();
    o.require(got == g.hex, "got " + got + " want " + g.hex);
  }
  if (o.pass)
    o.detail = "3/3 keys match";
  return o;
}

} // namespace

int main() {
  struct Criterion {
    const char *id;
    const char *title;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"AC1", "worked local-score example", ac1_worked_scores},
      {"AC2", "normalization and canonicalization goldens", ac2_normalization_goldens},
      {"AC3", "pipeline top-1 equals reference model", ac3_oracle_equivalence},
      {"AC4", "memorization on conflict-free corpus", ac4_memorization},
      {"AC5", "determinism and order independence", ac5_determinism},
      {"AC6", "frequency tie-break", ac6_tie_break},
      {"AC7", "match-rate trend across the schedule", ac7_match_rate_shape},
      {"AC8", "single-threaded throughput", ac8_throughput},
      {"AC9", "hash stability goldens", ac9_hash_stability},
  };

  int failures = 0;
  for (const auto &c : criteria) {
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception &e) {
      outcome.pass = false;
      outcome.detail = std::string("exception: ") + e.what();
    }
    failures += !outcome.pass;
    std::printf("[%s] %s %s: %s\n", outcome.pass ? "PASS" : "FAIL", c.id, c.title,
                outcome.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures,
              std::size(criteria));
  return failures == 0 ? 0 : 1;
}
