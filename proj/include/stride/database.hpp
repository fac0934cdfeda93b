#pragma once

// N-gram -> top-K label database.
//
// Building happens in a DatabaseBuilder that keeps exact per-key label
// counts. Builders over disjoint shards can be merged in any order; the
// finalized NGramDatabase (and its serialized bytes) only depends on the
// multiset of records that went in.
//
// File layout, little-endian:
//   "STRIDEDB"                    8 bytes magic
//   u32 version                   currently 1
//   u32 len, metadata JSON        task, schedule, k, normalization digest, stats
//   u32 label count
//     per label: u32 len, UTF-8   ascending byte order
//     per label: u64 global count same order
//   u64 record count
//     per record (ascending key): 12-byte key, u8 n,
//                                 n x (u32 label index, u64 count)

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stride/corpus.hpp"
#include "stride/ngram.hpp"

namespace stride {

inline constexpr std::uint32_t kDatabaseFormatVersion = 1;
inline constexpr std::uint32_t kDefaultTopK = 5;

struct DatabaseConfig {
  Task task = Task::names;
  SizeSchedule schedule;
  std::uint32_t top_k = kDefaultTopK;
  std::string normalization_digest;

  void validate() const;
  friend bool operator==(const DatabaseConfig &, const DatabaseConfig &) = default;
};

struct BuildStats {
  std::uint64_t functions = 0;
  std::uint64_t variables = 0;
  // Variables skipped because they had no label for the task.
  std::uint64_t skipped_variables = 0;

  BuildStats &operator+=(const BuildStats &other);
  friend bool operator==(const BuildStats &, const BuildStats &) = default;
};

struct Entry {
  std::uint32_t label = 0;
  std::uint64_t count = 0;

  friend bool operator==(const Entry &, const Entry &) = default;
};

// Labels sorted ascending; ids are positions in that order.
class LabelTable {
public:
  LabelTable() = default;
  LabelTable(std::vector<std::string> labels, std::vector<std::uint64_t> counts);

  std::size_t size() const { return labels_.size(); }
  const std::string &label(std::uint32_t id) const { return labels_.at(id); }
  std::uint64_t global_count(std::uint32_t id) const { return counts_.at(id); }
  std::optional<std::uint32_t> find(std::string_view label) const;
  // 0 for labels never seen in training.
  std::uint64_t global_count(std::string_view label) const;

  const std::vector<std::string> &labels() const { return labels_; }
  const std::vector<std::uint64_t> &counts() const { return counts_; }

  friend bool operator==(const LabelTable &, const LabelTable &) = default;

private:
  std::vector<std::string> labels_;
  std::vector<std::uint64_t> counts_;
};

class NGramDatabase;

class DatabaseBuilder {
public:
  explicit DatabaseBuilder(DatabaseConfig config);

  // Adds every N-gram context of every labelled variable in the record.
  void add(const FunctionRecord &record);
  // Sums counts from `other` into this builder. Throws on config mismatch.
  void merge(const DatabaseBuilder &other);

  NGramDatabase finalize() const;

  const DatabaseConfig &config() const { return config_; }
  const BuildStats &stats() const { return stats_; }
  std::size_t distinct_keys() const { return counts_.size(); }

private:
  std::uint32_t intern(std::string_view label);

  DatabaseConfig config_;
  BuildStats stats_;
  std::unordered_map<std::string, std::uint32_t> label_ids_;
  std::vector<std::string> label_names_;
  std::vector<std::uint64_t> label_counts_;
  // Per key: (interned label, count). Lists stay short, so linear scans win.
  std::unordered_map<NGramKey, std::vector<std::pair<std::uint32_t, std::uint64_t>>,
                     NGramKeyHash>
      counts_;
};

DatabaseBuilder merge(DatabaseBuilder a, const DatabaseBuilder &b);

// Immutable, finalized database. Safe for concurrent lookups.
class NGramDatabase {
public:
  NGramDatabase() = default;

  const DatabaseConfig &config() const { return config_; }
  const BuildStats &stats() const { return stats_; }
  const LabelTable &labels() const { return labels_; }
  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }

  // Entries are ordered by count descending, then label ascending.
  std::optional<std::span<const Entry>> lookup(const NGramKey &key) const;

  const NGramKey &key_at(std::size_t i) const { return keys_[i]; }
  std::span<const Entry> entries_at(std::size_t i) const;

  std::string serialize() const;
  static NGramDatabase deserialize(std::string_view bytes, std::string_view source);

  void save(const std::filesystem::path &path) const;
  static NGramDatabase load(const std::filesystem::path &path);

  friend bool operator==(const NGramDatabase &, const NGramDatabase &) = default;

private:
  friend class DatabaseBuilder;

  DatabaseConfig config_;
  BuildStats stats_;
  LabelTable labels_;
  std::vector<NGramKey> keys_;
  // entries of keys_[i] are entries_[offsets_[i] .. offsets_[i + 1])
  std::vector<std::uint64_t> offsets_{0};
  std::vector<Entry> entries_;
};

} // namespace stride
