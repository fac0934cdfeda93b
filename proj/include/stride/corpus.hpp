#pragma once

// Corpus data model and the streaming JSONL loader.
//
// One line per function:
//   {"fn_id": "...", "bin_id": "...", "tokens": [...],
//    "var_occurrences": [[index, "var_key"], ...],
//    "labels": {"var_key": {"name": "...", "type": "..."}}}
// Unknown fields are ignored. "name"/"type" may be null or missing.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stride/tokens.hpp"

namespace stride {

enum class Task { names, types };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);

struct Label {
  std::optional<std::string> name;
  std::optional<std::string> type;

  const std::optional<std::string> &for_task(Task task) const {
    return task == Task::names ? name : type;
  }

  friend bool operator==(const Label &, const Label &) = default;
};

struct Occurrence {
  std::size_t token_index = 0;
  std::string var_key;

  friend bool operator==(const Occurrence &, const Occurrence &) = default;
};

struct FunctionRecord {
  std::string fn_id;
  std::string bin_id;
  std::vector<Token> tokens;
  // Sorted by token_index once validated.
  std::vector<Occurrence> var_occurrences;
  std::map<std::string, Label, std::less<>> labels;

  // Distinct var_keys ordered by first occurrence.
  std::vector<std::string> variables() const;

  friend bool operator==(const FunctionRecord &, const FunctionRecord &) = default;
};

// Position-indexed view of a record's variables, shared by N-gram extraction
// and prediction. Borrows from the record it was built from.
class VariableLayout {
public:
  static constexpr std::uint32_t kNoVariable = UINT32_MAX;

  explicit VariableLayout(const FunctionRecord &record);

  const FunctionRecord &record() const { return *record_; }
  // Variables in first-occurrence order.
  const std::vector<std::string> &var_keys() const { return var_keys_; }
  // Slot of the variable at a token position, or kNoVariable.
  std::uint32_t slot_at(std::size_t token_index) const {
    return slot_at_[token_index];
  }
  const std::vector<std::size_t> &occurrences(std::uint32_t slot) const {
    return occurrences_[slot];
  }
  std::optional<std::uint32_t> find(std::string_view var_key) const;

private:
  const FunctionRecord *record_;
  std::vector<std::string> var_keys_;
  std::vector<std::uint32_t> slot_at_;
  std::vector<std::vector<std::size_t>> occurrences_;
};

// Checks the record invariants and sorts var_occurrences. Throws
// stride::Error naming the fn_id and the violated invariant.
void validate_record(FunctionRecord &record);

// Parses, validates and normalizes one JSONL line. `line_no` is only used in
// diagnostics.
FunctionRecord parse_record(std::string_view line, const NormalizationConfig &config,
                            std::size_t line_no = 0);

nlohmann::json record_to_json(const FunctionRecord &record);

// Streams records from a JSONL file in file order. Blank lines are skipped.
// Only fn_ids are retained across records (for the uniqueness check).
class CorpusReader {
public:
  CorpusReader(const std::filesystem::path &path, NormalizationConfig config);

  std::optional<FunctionRecord> next();
  std::size_t line_number() const { return line_no_; }
  const std::filesystem::path &path() const { return path_; }

private:
  std::filesystem::path path_;
  NormalizationConfig config_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
  std::unordered_set<std::string> seen_ids_;
};

// Convenience for tests and small corpora.
std::vector<FunctionRecord> read_corpus(const std::filesystem::path &path,
                                        const NormalizationConfig &config);

void write_corpus(const std::filesystem::path &path,
                  const std::vector<FunctionRecord> &records);

using Fingerprint = std::array<std::uint8_t, 12>;

// Digest of the token sequence with every variable occurrence replaced by a
// function-wide canonical name (@var_1@, @var_2@, ... by first appearance).
Fingerprint function_fingerprint(const FunctionRecord &record);

} // namespace stride
