#include "stride/corpus.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "stride/error.hpp"
#include "stride/ngram.hpp"

namespace stride {

using nlohmann::json;

std::string_view to_string(Task task) {
  return task == Task::names ? "names" : "types";
}

Task parse_task(std::string_view text) {
  if (text == "names" || text == "name")
    return Task::names;
  if (text == "types" || text == "type")
    return Task::types;
  throw Error("unknown task '" + std::string(text) + "' (expected names or types)");
}

std::vector<std::string> FunctionRecord::variables() const {
  std::vector<const Occurrence *> ordered;
  ordered.reserve(var_occurrences.size());
  for (const auto &occ : var_occurrences)
    ordered.push_back(&occ);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Occurrence *a, const Occurrence *b) {
                     return a->token_index < b->token_index;
                   });
  std::vector<std::string> keys;
  for (const auto *occ : ordered) {
    if (std::find(keys.begin(), keys.end(), occ->var_key) == keys.end())
      keys.push_back(occ->var_key);
  }
  return keys;
}

VariableLayout::VariableLayout(const FunctionRecord &record)
    : record_(&record), slot_at_(record.tokens.size(), kNoVariable) {
  std::vector<const Occurrence *> ordered;
  for (const auto &occ : record.var_occurrences)
    ordered.push_back(&occ);
  std::sort(ordered.begin(), ordered.end(),
            [](const Occurrence *a, const Occurrence *b) {
              return a->token_index < b->token_index;
            });
  for (const auto *occ : ordered) {
    if (occ->token_index >= slot_at_.size())
      throw Error("function '" + record.fn_id + "': occurrence index " +
                  std::to_string(occ->token_index) + " out of range");
    auto slot = find(occ->var_key);
    if (!slot) {
      slot = static_cast<std::uint32_t>(var_keys_.size());
      var_keys_.push_back(occ->var_key);
      occurrences_.emplace_back();
    }
    slot_at_[occ->token_index] = *slot;
    occurrences_[*slot].push_back(occ->token_index);
  }
}

std::optional<std::uint32_t> VariableLayout::find(std::string_view var_key) const {
  for (std::size_t i = 0; i < var_keys_.size(); ++i) {
    if (var_keys_[i] == var_key)
      return static_cast<std::uint32_t>(i);
  }
  return std::nullopt;
}

void validate_record(FunctionRecord &record) {
  auto fail = [&](const std::string &what) {
    throw Error("function '" + record.fn_id + "': " + what);
  };
  if (record.fn_id.empty())
    throw Error("record with empty fn_id");
  for (std::size_t i = 0; i < record.tokens.size(); ++i) {
    const auto &t = record.tokens[i];
    if (t.empty())
      fail("token " + std::to_string(i) + " is empty");
    if (t.find('\xff') != std::string::npos)
      fail("token " + std::to_string(i) + " contains reserved byte 0xFF");
  }

  std::stable_sort(record.var_occurrences.begin(), record.var_occurrences.end(),
                   [](const Occurrence &a, const Occurrence &b) {
                     return a.token_index < b.token_index;
                   });
  for (std::size_t i = 0; i < record.var_occurrences.size(); ++i) {
    const auto &occ = record.var_occurrences[i];
    if (occ.token_index >= record.tokens.size())
      fail("occurrence index " + std::to_string(occ.token_index) +
           " out of range (" + std::to_string(record.tokens.size()) + " tokens)");
    if (i > 0 && record.var_occurrences[i - 1].token_index == occ.token_index)
      fail("token index " + std::to_string(occ.token_index) +
           " listed as more than one occurrence");
    if (occ.var_key.empty())
      fail("occurrence with empty var_key");
    if (!record.labels.contains(occ.var_key))
      fail("variable '" + occ.var_key + "' has no labels entry");
  }
  for (const auto &[key, label] : record.labels) {
    bool used = std::any_of(record.var_occurrences.begin(), record.var_occurrences.end(),
                            [&](const Occurrence &o) { return o.var_key == key; });
    if (!used)
      fail("labelled variable '" + key + "' has no occurrences");
  }
}

namespace {

std::optional<std::string> optional_string(const json &obj, const char *field,
                                           const std::string &where) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null())
    return std::nullopt;
  if (!it->is_string())
    throw Error(where + ": label field '" + field + "' must be a string or null");
  return it->get<std::string>();
}

FunctionRecord record_from_json(const json &j, const std::string &where) {
  if (!j.is_object())
    throw Error(where + ": expected a JSON object");
  auto require = [&](const char *field) -> const json & {
    auto it = j.find(field);
    if (it == j.end())
      throw Error(where + ": missing field '" + field + "'");
    return *it;
  };

  FunctionRecord record;
  const auto &fn_id = require("fn_id");
  if (!fn_id.is_string())
    throw Error(where + ": fn_id must be a string");
  record.fn_id = fn_id.get<std::string>();
  std::string ctx = where + " (fn_id '" + record.fn_id + "')";

  if (auto it = j.find("bin_id"); it != j.end() && !it->is_null()) {
    if (!it->is_string())
      throw Error(ctx + ": bin_id must be a string");
    record.bin_id = it->get<std::string>();
  }

  const auto &tokens = require("tokens");
  if (!tokens.is_array())
    throw Error(ctx + ": tokens must be an array");
  record.tokens.reserve(tokens.size());
  for (const auto &t : tokens) {
    if (!t.is_string())
      throw Error(ctx + ": tokens must be strings");
    record.tokens.push_back(t.get<std::string>());
  }

  const auto &occs = require("var_occurrences");
  if (!occs.is_array())
    throw Error(ctx + ": var_occurrences must be an array");
  for (const auto &pair : occs) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
        !pair[1].is_string())
      throw Error(ctx + ": var_occurrences entries must be [index, var_key]");
    auto index = pair[0].get<std::int64_t>();
    if (index < 0)
      throw Error(ctx + ": negative occurrence index");
    record.var_occurrences.push_back(
        {static_cast<std::size_t>(index), pair[1].get<std::string>()});
  }

  const auto &labels = require("labels");
  if (!labels.is_object())
    throw Error(ctx + ": labels must be an object");
  for (const auto &[key, value] : labels.items()) {
    Label label;
    if (!value.is_null()) {
      if (!value.is_object())
        throw Error(ctx + ": label for '" + key + "' must be an object");
      label.name = optional_string(value, "name", ctx);
      label.type = optional_string(value, "type", ctx);
    }
    record.labels.emplace(key, std::move(label));
  }
  return record;
}

void normalize_record(FunctionRecord &record, const NormalizationConfig &config) {
  std::vector<std::size_t> positions;
  positions.reserve(record.var_occurrences.size());
  for (const auto &occ : record.var_occurrences)
    positions.push_back(occ.token_index);
  record.tokens = normalize_function(record.tokens, config, positions);
}

} // namespace

FunctionRecord parse_record(std::string_view line, const NormalizationConfig &config,
                            std::size_t line_no) {
  std::string where = "line " + std::to_string(line_no);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error &e) {
    throw Error(where + ": malformed JSON: " + e.what());
  }
  auto record = record_from_json(j, where);
  try {
    validate_record(record);
  } catch (const Error &e) {
    throw Error(where + ": " + e.what());
  }
  normalize_record(record, config);
  return record;
}

json record_to_json(const FunctionRecord &record) {
  json occs = json::array();
  for (const auto &occ : record.var_occurrences)
    occs.push_back({occ.token_index, occ.var_key});
  json labels = json::object();
  for (const auto &[key, label] : record.labels) {
    labels[key] = {{"name", label.name ? json(*label.name) : json(nullptr)},
                   {"type", label.type ? json(*label.type) : json(nullptr)}};
  }
  return {{"fn_id", record.fn_id},
          {"bin_id", record.bin_id},
          {"tokens", record.tokens},
          {"var_occurrences", std::move(occs)},
          {"labels", std::move(labels)}};
}

CorpusReader::CorpusReader(const std::filesystem::path &path, NormalizationConfig config)
    : path_(path), config_(std::move(config)), in_(path) {
  if (!in_)
    throw Error("cannot open corpus " + path.string());
}

std::optional<FunctionRecord> CorpusReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_no_;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    FunctionRecord record;
    try {
      record = parse_record(line, config_, line_no_);
    } catch (const Error &e) {
      throw Error(path_.string() + ": " + e.what());
    }
    if (!seen_ids_.insert(record.fn_id).second)
      throw Error(path_.string() + ": line " + std::to_string(line_no_) +
                  ": duplicate fn_id '" + record.fn_id + "'");
    return record;
  }
  if (in_.bad())
    throw Error(path_.string() + ": read error");
  return std::nullopt;
}

std::vector<FunctionRecord> read_corpus(const std::filesystem::path &path,
                                        const NormalizationConfig &config) {
  CorpusReader reader(path, config);
  std::vector<FunctionRecord> out;
  while (auto record = reader.next())
    out.push_back(std::move(*record));
  return out;
}

void write_corpus(const std::filesystem::path &path,
                  const std::vector<FunctionRecord> &records) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("cannot write " + path.string());
  for (const auto &record : records)
    out << record_to_json(record).dump() << '\n';
  if (!out)
    throw Error("write failed: " + path.string());
}

Fingerprint function_fingerprint(const FunctionRecord &record) {
  VariableLayout layout(record);
  std::vector<std::string> canonical_names;
  canonical_names.reserve(layout.var_keys().size());
  for (std::size_t i = 0; i < layout.var_keys().size(); ++i)
    canonical_names.push_back(canonical_var_token(i + 1));

  std::vector<std::string_view> tokens;
  tokens.reserve(record.tokens.size());
  for (std::size_t i = 0; i < record.tokens.size(); ++i) {
    auto slot = layout.slot_at(i);
    if (slot == VariableLayout::kNoVariable)
      tokens.push_back(record.tokens[i]);
    else
      tokens.push_back(canonical_names[slot]);
  }
  return truncated_token_hash(tokens, "fn");
}

} // namespace stride
