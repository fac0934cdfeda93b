#pragma once

// Subcommands behind the `stride` executable. Each cmd_* returns the process
// exit status and never throws; diagnostics go to `err`.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stride/corpus.hpp"
#include "stride/eval.hpp"
#include "stride/predict.hpp"
#include "stride/tokens.hpp"

namespace stride::cli {

struct NormalizationOptions {
  std::optional<std::filesystem::path> prefix_file;
  std::optional<std::filesystem::path> whitelist_file;
  bool strip = false;
  std::string literal_mode = "pre_normalized";
  std::uint64_t numeric_threshold = 0x100;

  NormalizationConfig resolve() const;
};

struct TrainOptions {
  std::filesystem::path corpus;
  std::filesystem::path output;
  // names, types or both
  std::string task = "names";
  std::optional<std::string> schedule;
  std::uint32_t top_k = 5;
  std::size_t workers = 1;
  NormalizationOptions normalization;
};

struct PredictOptions {
  std::filesystem::path db;
  std::filesystem::path corpus;
  std::filesystem::path output;
  std::size_t top_n = 5;
  bool explain = false;
  bool force = false;
  std::size_t workers = 1;
  NormalizationOptions normalization;
};

struct EvalOptions {
  std::filesystem::path db;
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> predictions;
  std::optional<std::filesystem::path> train;
  std::string weighting = "per_variable";
  std::optional<std::filesystem::path> json_output;
  std::optional<std::filesystem::path> size_csv;
  bool force = false;
  std::size_t workers = 1;
  NormalizationOptions normalization;
};

struct MatchRateOptions {
  std::filesystem::path db;
  std::filesystem::path corpus;
  std::optional<std::string> schedule;
  std::optional<std::filesystem::path> csv_output;
  std::optional<std::filesystem::path> json_output;
  bool force = false;
  NormalizationOptions normalization;
};

struct InspectOptions {
  std::filesystem::path db;
  std::string side = "left";
  // Literal canonical tokens, hashed as given.
  std::vector<std::string> tokens;
};

int cmd_train(const TrainOptions &options, std::ostream &out, std::ostream &err);
int cmd_predict(const PredictOptions &options, std::ostream &out, std::ostream &err);
int cmd_eval(const EvalOptions &options, std::ostream &out, std::ostream &err);
int cmd_match_rate(const MatchRateOptions &options, std::ostream &out, std::ostream &err);
int cmd_inspect(const InspectOptions &options, std::ostream &out, std::ostream &err);

// Parses `args` (without the program name) and dispatches.
int run(std::span<const std::string> args, std::ostream &out, std::ostream &err);

// Output path for one task when training with --task both.
std::filesystem::path task_output_path(const std::filesystem::path &output, Task task);

// One prediction JSONL line.
nlohmann::json prediction_to_json(std::string_view fn_id, const Prediction &prediction,
                                  bool explain);
// Reads a predictions JSONL file grouped by function, in first-seen order.
std::vector<FunctionPredictions> read_predictions(const std::filesystem::path &path);

} // namespace stride::cli
