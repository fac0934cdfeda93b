#include "stride/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <thread>
#include <unordered_map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "stride/database.hpp"
#include "stride/error.hpp"
#include "stride/ngram.hpp"

namespace stride::cli {

using nlohmann::json;

namespace {

constexpr std::size_t kBatchSize = 1024;

enum class LogLevel { quiet, info, debug };

LogLevel log_level() {
  const char *env = std::getenv("STRIDE_LOG");
  if (env == nullptr)
    return LogLevel::info;
  std::string_view level = env;
  if (level == "quiet" || level == "error" || level == "0")
    return LogLevel::quiet;
  if (level == "debug")
    return LogLevel::debug;
  return LogLevel::info;
}

// Runs fn(worker, index) for every index; index i goes to worker i % workers.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn &&fn) {
  if (workers <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i)
      fn(std::size_t{0}, i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += workers)
          fn(w, i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto &t : threads)
    t.join();
  for (auto &e : errors) {
    if (e)
      std::rethrow_exception(e);
  }
}

// Reads the corpus in batches and hands each batch to `fn`.
template <typename Fn>
void for_each_batch(CorpusReader &reader, Fn &&fn) {
  std::vector<FunctionRecord> batch;
  batch.reserve(kBatchSize);
  while (true) {
    batch.clear();
    while (batch.size() < kBatchSize) {
      auto record = reader.next();
      if (!record)
        break;
      batch.push_back(std::move(*record));
    }
    if (batch.empty())
      return;
    fn(batch);
  }
}

void require_readable(const std::filesystem::path &path, const char *what) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw Error(std::string(what) + " not found: " + path.string());
}

void require_writable_parent(const std::filesystem::path &path) {
  auto parent = path.parent_path();
  std::error_code ec;
  if (!parent.empty() && !std::filesystem::is_directory(parent, ec))
    throw Error("output directory does not exist: " + parent.string());
}

void check_digest(const NGramDatabase &db, const NormalizationConfig &config,
                  const std::filesystem::path &db_path, bool force, std::ostream &err) {
  auto effective = config.digest();
  if (effective == db.config().normalization_digest)
    return;
  std::string message = "normalization settings differ from the ones " + db_path.string() +
                        " was built with (database " +
                        db.config().normalization_digest.substr(0, 16) + ", current " +
                        effective.substr(0, 16) +
                        "); pass the same --prefix-file/--whitelist-file/--strip/"
                        "--literal-mode/--numeric-threshold flags used for training";
  if (!force)
    throw Error(message + ", or --force to ignore");
  err << "warning: " << message << '\n';
}

std::vector<Prediction> predict_all(const FunctionRecord &record, const NGramDatabase &db,
                                    std::size_t top_n, bool explain) {
  auto predictions = predict_function(record, db, top_n);
  if (!explain) {
    for (auto &p : predictions)
      p.trace.clear();
  }
  return predictions;
}

template <typename Fn>
int guarded(std::ostream &err, Fn &&fn) {
  try {
    return fn();
  } catch (const Error &e) {
    err << "error: " << e.what() << '\n';
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
  }
  return 1;
}

json scored_json(const std::vector<ScoredLabel> &labels) {
  json out = json::array();
  for (const auto &s : labels)
    out.push_back({s.label, s.score});
  return out;
}

void write_text(const std::filesystem::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error("cannot write " + path.string());
  out << text;
  if (!out)
    throw Error("write failed: " + path.string());
}

} // namespace

NormalizationConfig NormalizationOptions::resolve() const {
  NormalizationConfig config;
  if (prefix_file)
    config.address_prefixes = load_prefix_file(*prefix_file);
  config.numeric_threshold = numeric_threshold;
  config.literal_mode = parse_literal_mode(literal_mode);
  if (whitelist_file)
    config.strip_identifiers = load_whitelist_file(*whitelist_file);
  else if (strip)
    config.strip_identifiers = default_identifier_whitelist();
  config.validate();
  return config;
}

std::filesystem::path task_output_path(const std::filesystem::path &output, Task task) {
  auto name = output.stem().string() + "." + std::string(to_string(task)) +
              output.extension().string();
  return output.parent_path() / name;
}

json prediction_to_json(std::string_view fn_id, const Prediction &prediction, bool explain) {
  json j = {{"fn_id", fn_id},
            {"var_key", prediction.var_key},
            {"predictions", scored_json(prediction.ranking)}};
  if (explain) {
    json trace = json::array();
    for (const auto &m : prediction.trace) {
      trace.push_back({{"occ_index", m.occ_index},
                       {"side", to_string(m.side)},
                       {"n", m.matched_n},
                       {"entries", scored_json(m.entries)}});
    }
    j["trace"] = std::move(trace);
  }
  return j;
}

std::vector<FunctionPredictions> read_predictions(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open predictions " + path.string());
  std::vector<FunctionPredictions> out;
  std::unordered_map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    auto where = path.string() + ": line " + std::to_string(line_no);
    try {
      auto j = json::parse(line);
      Prediction p;
      auto fn_id = j.at("fn_id").get<std::string>();
      p.var_key = j.at("var_key").get<std::string>();
      for (const auto &pair : j.at("predictions"))
        p.ranking.push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
      auto [it, inserted] = index.try_emplace(fn_id, out.size());
      if (inserted)
        out.push_back({fn_id, {}});
      out[it->second].predictions.push_back(std::move(p));
    } catch (const json::exception &e) {
      throw Error(where + ": malformed prediction: " + e.what());
    }
  }
  return out;
}

int cmd_train(const TrainOptions &options, std::ostream &out, std::ostream &err) {
  return guarded(err, [&] {
    require_readable(options.corpus, "training corpus");
    require_writable_parent(options.output);
    auto normalization = options.normalization.resolve();
    auto schedule = options.schedule ? SizeSchedule::parse(*options.schedule) : SizeSchedule();

    std::vector<Task> tasks;
    if (options.task == "both")
      tasks = {Task::names, Task::types};
    else
      tasks = {parse_task(options.task)};

    std::size_t workers = std::max<std::size_t>(options.workers, 1);
    // builders[t][w]: task t, worker w
    std::vector<std::vector<DatabaseBuilder>> builders;
    for (auto task : tasks) {
      DatabaseConfig config{task, schedule, options.top_k, normalization.digest()};
      builders.emplace_back(workers, DatabaseBuilder(config));
    }

    auto started = std::chrono::steady_clock::now();
    CorpusReader reader(options.corpus, normalization);
    for_each_batch(reader, [&](const std::vector<FunctionRecord> &batch) {
      parallel_for(batch.size(), workers, [&](std::size_t w, std::size_t i) {
        for (auto &per_task : builders)
          per_task[w].add(batch[i]);
      });
    });

    for (std::size_t t = 0; t < tasks.size(); ++t) {
      auto &shards = builders[t];
      for (std::size_t w = 1; w < shards.size(); ++w)
        shards[0].merge(shards[w]);
      auto db = shards[0].finalize();
      auto path = tasks.size() == 1 ? options.output : task_output_path(options.output, tasks[t]);
      db.save(path);
      const auto &stats = db.stats();
      out << "wrote " << path.string() << " (task " << to_string(tasks[t])
          << "): functions=" << stats.functions << " variables=" << stats.variables
          << " skipped_variables=" << stats.skipped_variables << " keys=" << db.size()
          << " labels=" << db.labels().size() << '\n';
      if (stats.skipped_variables > 0 && log_level() != LogLevel::quiet)
        err << "warning: " << stats.skipped_variables << " variable(s) had no "
            << to_string(tasks[t]) << " label and were skipped\n";
    }
    if (log_level() == LogLevel::debug) {
      auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started);
      err << "train: " << elapsed.count() << " s\n";
    }
    return 0;
  });
}

int cmd_predict(const PredictOptions &options, std::ostream &out, std::ostream &err) {
  return guarded(err, [&] {
    require_readable(options.db, "database");
    require_readable(options.corpus, "test corpus");
    require_writable_parent(options.output);
    if (options.top_n < 1)
      throw Error("--top-n must be at least 1");
    auto normalization = options.normalization.resolve();
    auto db = NGramDatabase::load(options.db);
    check_digest(db, normalization, options.db, options.force, err);

    std::ofstream sink(options.output, std::ios::binary | std::ios::trunc);
    if (!sink)
      throw Error("cannot write " + options.output.string());

    std::size_t workers = std::max<std::size_t>(options.workers, 1);
    std::uint64_t functions = 0, variables = 0, abstentions = 0;
    CorpusReader reader(options.corpus, normalization);
    std::vector<std::vector<Prediction>> results;
    for_each_batch(reader, [&](const std::vector<FunctionRecord> &batch) {
      results.assign(batch.size(), {});
      parallel_for(batch.size(), workers, [&](std::size_t, std::size_t i) {
        results[i] = predict_all(batch[i], db, options.top_n, options.explain);
      });
      for (std::size_t i = 0; i < batch.size(); ++i) {
        ++functions;
        for (const auto &p : results[i]) {
          ++variables;
          abstentions += p.abstained();
          sink << prediction_to_json(batch[i].fn_id, p, options.explain).dump() << '\n';
        }
      }
    });
    sink.flush();
    if (!sink)
      throw Error("write failed: " + options.output.string());
    out << "wrote " << options.output.string() << ": functions=" << functions
        << " variables=" << variables << " abstentions=" << abstentions << '\n';
    return 0;
  });
}

int cmd_eval(const EvalOptions &options, std::ostream &out, std::ostream &err) {
  return guarded(err, [&] {
    require_readable(options.db, "database");
    require_readable(options.corpus, "test corpus");
    if (options.predictions)
      require_readable(*options.predictions, "predictions");
    if (options.train)
      require_readable(*options.train, "training corpus");
    if (options.json_output)
      require_writable_parent(*options.json_output);
    if (options.size_csv)
      require_writable_parent(*options.size_csv);

    auto normalization = options.normalization.resolve();
    auto db = NGramDatabase::load(options.db);
    check_digest(db, normalization, options.db, options.force, err);

    EvalConfig config;
    config.task = db.config().task;
    config.weighting = parse_weighting(options.weighting);

    TrainReference train;
    if (options.train) {
      CorpusReader train_reader(*options.train, normalization);
      train = build_train_reference(train_reader, config.task);
    } else {
      train.label_counts = label_counts_from(db.labels());
    }
    Evaluator evaluator(config, std::move(train));

    std::vector<FunctionPredictions> stored;
    std::unordered_map<std::string_view, std::size_t> stored_index;
    std::vector<bool> used;
    if (options.predictions) {
      stored = read_predictions(*options.predictions);
      used.assign(stored.size(), false);
      for (std::size_t i = 0; i < stored.size(); ++i)
        stored_index.emplace(stored[i].fn_id, i);
    }

    std::size_t workers = std::max<std::size_t>(options.workers, 1);
    CorpusReader reader(options.corpus, normalization);
    std::vector<std::vector<Prediction>> results;
    for_each_batch(reader, [&](const std::vector<FunctionRecord> &batch) {
      if (options.predictions) {
        for (const auto &record : batch) {
          auto it = stored_index.find(record.fn_id);
          if (it == stored_index.end()) {
            evaluator.add(record, {});
          } else {
            used[it->second] = true;
            evaluator.add(record, stored[it->second].predictions);
          }
        }
        return;
      }
      results.assign(batch.size(), {});
      parallel_for(batch.size(), workers, [&](std::size_t, std::size_t i) {
        results[i] = predict_all(batch[i], db, 1, false);
      });
      for (std::size_t i = 0; i < batch.size(); ++i)
        evaluator.add(batch[i], results[i]);
    });
    for (std::size_t i = 0; i < used.size(); ++i) {
      if (!used[i])
        throw Error("prediction refers to unknown function '" + stored[i].fn_id + "'");
    }

    auto report = evaluator.report();
    out << report.to_text();
    if (options.json_output)
      write_text(*options.json_output, report.to_json().dump(2) + "\n");
    if (options.size_csv)
      write_text(*options.size_csv, report.function_size_csv());
    return 0;
  });
}

int cmd_match_rate(const MatchRateOptions &options, std::ostream &out, std::ostream &err) {
  return guarded(err, [&] {
    require_readable(options.db, "database");
    require_readable(options.corpus, "test corpus");
    if (options.csv_output)
      require_writable_parent(*options.csv_output);
    if (options.json_output)
      require_writable_parent(*options.json_output);
    auto normalization = options.normalization.resolve();
    auto db = NGramDatabase::load(options.db);
    check_digest(db, normalization, options.db, options.force, err);
    auto schedule =
        options.schedule ? SizeSchedule::parse(*options.schedule) : db.config().schedule;

    MatchRateCounter counter(db, schedule);
    CorpusReader reader(options.corpus, normalization);
    while (auto record = reader.next())
      counter.add(*record);

    out << match_rate_text(counter.rows());
    if (options.csv_output)
      write_text(*options.csv_output, match_rate_csv(counter.rows()));
    if (options.json_output)
      write_text(*options.json_output, match_rate_json(counter.rows()).dump(2) + "\n");
    return 0;
  });
}

int cmd_inspect(const InspectOptions &options, std::ostream &out, std::ostream &err) {
  return guarded(err, [&] {
    require_readable(options.db, "database");
    if (options.tokens.empty())
      throw Error("inspect needs at least one token");
    auto db = NGramDatabase::load(options.db);
    auto side = parse_side(options.side);
    auto key = hash_ngram(options.tokens, side);
    out << "key " << key.hex() << " (" << to_string(side) << ", " << options.tokens.size()
        << " tokens)\n";
    auto entries = db.lookup(key);
    if (!entries) {
      out << "no entry\n";
      return 0;
    }
    auto scores = local_scores(*entries);
    for (std::size_t i = 0; i < entries->size(); ++i) {
      char score[32];
      std::snprintf(score, sizeof(score), "%.3f", scores[i].score);
      out << "  " << db.labels().label((*entries)[i].label) << "  count=" << (*entries)[i].count
          << "  score=" << score << '\n';
    }
    return 0;
  });
}

namespace {

void add_normalization_flags(CLI::App &cmd, NormalizationOptions &options) {
  cmd.add_option("--prefix-file", options.prefix_file,
                 "Address-prefix map (PREFIX<TAB>REPLACEMENT per line)");
  cmd.add_option("--whitelist-file", options.whitelist_file,
                 "Identifier whitelist; implies --strip");
  cmd.add_flag("--strip", options.strip,
               "Replace tokens outside the built-in whitelist with '?'");
  cmd.add_option("--literal-mode", options.literal_mode, "pre_normalized or raw")
      ->check(CLI::IsMember({"pre_normalized", "raw"}));
  cmd.add_option("--numeric-threshold", options.numeric_threshold,
                 "Integer literals at or above this value become NUM_<digits>");
}

} // namespace

int run(std::span<const std::string> args, std::ostream &out, std::ostream &err) {
  CLI::App app{"Variable name and type recovery for decompiled code from N-gram usage signatures",
               "stride"};
  app.require_subcommand(1);

  TrainOptions train;
  auto *train_cmd = app.add_subcommand("train", "Build an N-gram database from a labelled corpus");
  train_cmd->add_option("-c,--corpus", train.corpus, "Training corpus (JSONL)")->required();
  train_cmd->add_option("-o,--output", train.output,
                        "Database file; with --task both, <stem>.names<ext> and "
                        "<stem>.types<ext> are written")
      ->required();
  train_cmd->add_option("-t,--task", train.task, "names, types or both")
      ->check(CLI::IsMember({"names", "types", "both"}));
  train_cmd->add_option("--schedule", train.schedule, "Comma-separated N sizes, descending");
  train_cmd->add_option("-k,--top-k", train.top_k, "Labels kept per N-gram")
      ->check(CLI::Range(1, 255));
  train_cmd->add_option("-j,--workers", train.workers, "Worker threads");
  add_normalization_flags(*train_cmd, train.normalization);

  PredictOptions predict;
  auto *predict_cmd = app.add_subcommand("predict", "Predict labels for every variable");
  predict_cmd->add_option("-d,--db", predict.db, "Database file")->required();
  predict_cmd->add_option("-c,--corpus", predict.corpus, "Test corpus (JSONL)")->required();
  predict_cmd->add_option("-o,--output", predict.output, "Predictions (JSONL)")->required();
  predict_cmd->add_option("-n,--top-n", predict.top_n, "Candidates per variable")
      ->check(CLI::PositiveNumber);
  predict_cmd->add_flag("--explain", predict.explain, "Include matched N-gram traces");
  predict_cmd->add_flag("--force", predict.force, "Ignore normalization mismatch");
  predict_cmd->add_option("-j,--workers", predict.workers, "Worker threads");
  add_normalization_flags(*predict_cmd, predict.normalization);

  EvalOptions eval;
  auto *eval_cmd = app.add_subcommand("eval", "Exact-match accuracy report");
  eval_cmd->add_option("-d,--db", eval.db, "Database file")->required();
  eval_cmd->add_option("-c,--corpus", eval.corpus, "Test corpus (JSONL)")->required();
  eval_cmd->add_option("-p,--predictions", eval.predictions,
                       "Predictions from `stride predict`; predicted in-process if omitted");
  eval_cmd->add_option("--train", eval.train,
                       "Training corpus, for In-Train/Not-In-Train split and label counts");
  eval_cmd->add_option("-w,--weighting", eval.weighting, "per_variable or per_instance")
      ->check(CLI::IsMember({"per_variable", "per_instance"}));
  eval_cmd->add_option("--json", eval.json_output, "Write the report as JSON");
  eval_cmd->add_option("--size-csv", eval.size_csv, "Write accuracy by function size as CSV");
  eval_cmd->add_flag("--force", eval.force, "Ignore normalization mismatch");
  eval_cmd->add_option("-j,--workers", eval.workers, "Worker threads");
  add_normalization_flags(*eval_cmd, eval.normalization);

  MatchRateOptions match;
  auto *match_cmd =
      app.add_subcommand("match-rate", "Per-N match fraction and top-k accuracy of matches");
  match_cmd->add_option("-d,--db", match.db, "Database file")->required();
  match_cmd->add_option("-c,--corpus", match.corpus, "Test corpus (JSONL)")->required();
  match_cmd->add_option("--schedule", match.schedule, "Sizes to report (default: database's)");
  match_cmd->add_option("--csv", match.csv_output, "Write n,matched,top1,top3,top5 CSV");
  match_cmd->add_option("--json", match.json_output, "Write the report as JSON");
  match_cmd->add_flag("--force", match.force, "Ignore normalization mismatch");
  add_normalization_flags(*match_cmd, match.normalization);

  InspectOptions inspect;
  auto *inspect_cmd =
      app.add_subcommand("inspect", "Look up a canonical token sequence in a database");
  inspect_cmd->add_option("-d,--db", inspect.db, "Database file")->required();
  inspect_cmd->add_option("-s,--side", inspect.side, "left or right")
      ->check(CLI::IsMember({"left", "right"}));
  inspect_cmd->add_option("tokens", inspect.tokens, "Canonical tokens, e.g. @var_1@ * @var_2@")
      ->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError &e) {
    return app.exit(e, out, err);
  }

  if (train_cmd->parsed())
    return cmd_train(train, out, err);
  if (predict_cmd->parsed())
    return cmd_predict(predict, out, err);
  if (eval_cmd->parsed())
    return cmd_eval(eval, out, err);
  if (match_cmd->parsed())
    return cmd_match_rate(match, out, err);
  return cmd_inspect(inspect, out, err);
}

} // namespace stride::cli
