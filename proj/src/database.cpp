#include "stride/database.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include <nlohmann/json.hpp>

#include "stride/error.hpp"

namespace stride {

namespace {

constexpr std::string_view kMagic = "STRIDEDB";

void put_u8(std::string &out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

void put_u32(std::string &out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string &out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
public:
  ByteReader(std::string_view bytes, std::string_view source)
      : bytes_(bytes), source_(source) {}

  std::string_view take(std::size_t n, const char *what) {
    if (bytes_.size() - pos_ < n)
      fail(std::string("truncated file while reading ") + what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8(const char *what) {
    return static_cast<std::uint8_t>(take(1, what)[0]);
  }
  std::uint32_t u32(const char *what) {
    auto b = take(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<std::uint8_t>(b[i]);
    return v;
  }
  std::uint64_t u64(const char *what) {
    auto b = take(8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
      v = (v << 8) | static_cast<std::uint8_t>(b[i]);
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string &what) const {
    throw Error(std::string(source_) + ": " + what);
  }

private:
  std::string_view bytes_;
  std::string_view source_;
  std::size_t pos_ = 0;
};

bool entry_before(const Entry &a, const Entry &b) {
  // Label ids follow ascending label order, so comparing ids compares labels.
  if (a.count != b.count)
    return a.count > b.count;
  return a.label < b.label;
}

nlohmann::json metadata_json(const DatabaseConfig &config, const BuildStats &stats) {
  return {{"format", "stride-ngram-db"},
          {"task", to_string(config.task)},
          {"schedule", config.schedule.sizes()},
          {"k", config.top_k},
          {"normalization_digest", config.normalization_digest},
          {"stats",
           {{"functions", stats.functions},
            {"variables", stats.variables},
            {"skipped_variables", stats.skipped_variables}}}};
}

} // namespace

void DatabaseConfig::validate() const {
  if (top_k < 1 || top_k > 255)
    throw Error("top-K must be between 1 and 255, got " + std::to_string(top_k));
}

BuildStats &BuildStats::operator+=(const BuildStats &other) {
  functions += other.functions;
  variables += other.variables;
  skipped_variables += other.skipped_variables;
  return *this;
}

LabelTable::LabelTable(std::vector<std::string> labels, std::vector<std::uint64_t> counts)
    : labels_(std::move(labels)), counts_(std::move(counts)) {
  if (labels_.size() != counts_.size())
    throw Error("label table: label/count size mismatch");
}

std::optional<std::uint32_t> LabelTable::find(std::string_view label) const {
  auto it = std::lower_bound(labels_.begin(), labels_.end(), label);
  if (it == labels_.end() || *it != label)
    return std::nullopt;
  return static_cast<std::uint32_t>(it - labels_.begin());
}

std::uint64_t LabelTable::global_count(std::string_view label) const {
  auto id = find(label);
  return id ? counts_[*id] : 0;
}

DatabaseBuilder::DatabaseBuilder(DatabaseConfig config) : config_(std::move(config)) {
  config_.validate();
}

std::uint32_t DatabaseBuilder::intern(std::string_view label) {
  auto [it, inserted] = label_ids_.try_emplace(
      std::string(label), static_cast<std::uint32_t>(label_names_.size()));
  if (inserted) {
    label_names_.emplace_back(label);
    label_counts_.push_back(0);
  }
  return it->second;
}

void DatabaseBuilder::add(const FunctionRecord &record) {
  ++stats_.functions;
  VariableLayout layout(record);
  std::string scratch;
  for (std::uint32_t slot = 0; slot < layout.var_keys().size(); ++slot) {
    const auto &var_key = layout.var_keys()[slot];
    auto label_it = record.labels.find(var_key);
    if (label_it == record.labels.end() || !label_it->second.for_task(config_.task)) {
      ++stats_.skipped_variables;
      continue;
    }
    ++stats_.variables;
    auto label = intern(*label_it->second.for_task(config_.task));
    ++label_counts_[label];

    for (auto occ : layout.occurrences(slot)) {
      for (auto side : kSides) {
        for (auto n : config_.schedule.sizes()) {
          auto window = extract_window(layout, occ, side, n);
          if (!window)
            continue;
          auto &list = counts_[window_key(*window, side, scratch)];
          auto hit = std::find_if(list.begin(), list.end(),
                                  [&](const auto &p) { return p.first == label; });
          if (hit == list.end())
            list.emplace_back(label, 1);
          else
            ++hit->second;
        }
      }
    }
  }
}

void DatabaseBuilder::merge(const DatabaseBuilder &other) {
  if (!(other.config_ == config_))
    throw Error("cannot merge databases built with different configurations "
                "(task, schedule, K or normalization differ)");
  stats_ += other.stats_;
  std::vector<std::uint32_t> remap(other.label_names_.size());
  for (std::size_t i = 0; i < other.label_names_.size(); ++i) {
    remap[i] = intern(other.label_names_[i]);
    label_counts_[remap[i]] += other.label_counts_[i];
  }
  for (const auto &[key, other_list] : other.counts_) {
    auto &list = counts_[key];
    for (const auto &[label, count] : other_list) {
      auto mapped = remap[label];
      auto hit = std::find_if(list.begin(), list.end(),
                              [&](const auto &p) { return p.first == mapped; });
      if (hit == list.end())
        list.emplace_back(mapped, count);
      else
        hit->second += count;
    }
  }
}

NGramDatabase DatabaseBuilder::finalize() const {
  NGramDatabase db;
  db.config_ = config_;
  db.stats_ = stats_;

  std::vector<std::uint32_t> order(label_names_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return label_names_[a] < label_names_[b];
  });
  std::vector<std::uint32_t> final_id(label_names_.size());
  std::vector<std::string> labels;
  std::vector<std::uint64_t> counts;
  labels.reserve(order.size());
  counts.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    final_id[order[i]] = static_cast<std::uint32_t>(i);
    labels.push_back(label_names_[order[i]]);
    counts.push_back(label_counts_[order[i]]);
  }
  db.labels_ = LabelTable(std::move(labels), std::move(counts));

  std::vector<const std::pair<const NGramKey,
                              std::vector<std::pair<std::uint32_t, std::uint64_t>>> *>
      records;
  records.reserve(counts_.size());
  for (const auto &kv : counts_)
    records.push_back(&kv);
  std::sort(records.begin(), records.end(),
            [](const auto *a, const auto *b) { return a->first < b->first; });

  db.keys_.reserve(records.size());
  db.offsets_.reserve(records.size() + 1);
  std::vector<Entry> scratch;
  for (const auto *record : records) {
    scratch.clear();
    for (const auto &[label, count] : record->second)
      scratch.push_back({final_id[label], count});
    std::sort(scratch.begin(), scratch.end(), entry_before);
    if (scratch.size() > config_.top_k)
      scratch.resize(config_.top_k);
    db.keys_.push_back(record->first);
    db.entries_.insert(db.entries_.end(), scratch.begin(), scratch.end());
    db.offsets_.push_back(db.entries_.size());
  }
  return db;
}

DatabaseBuilder merge(DatabaseBuilder a, const DatabaseBuilder &b) {
  a.merge(b);
  return a;
}

std::optional<std::span<const Entry>> NGramDatabase::lookup(const NGramKey &key) const {
  auto it = std::lower_bound(keys_.begin(), keys_.end(), key);
  if (it == keys_.end() || *it != key)
    return std::nullopt;
  return entries_at(static_cast<std::size_t>(it - keys_.begin()));
}

std::span<const Entry> NGramDatabase::entries_at(std::size_t i) const {
  return std::span<const Entry>(entries_).subspan(offsets_[i],
                                                  offsets_[i + 1] - offsets_[i]);
}

std::string NGramDatabase::serialize() const {
  std::string out;
  out.reserve(64 + keys_.size() * 13 + entries_.size() * 12);
  out.append(kMagic);
  put_u32(out, kDatabaseFormatVersion);
  auto meta = metadata_json(config_, stats_).dump();
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.append(meta);

  put_u32(out, static_cast<std::uint32_t>(labels_.size()));
  for (const auto &label : labels_.labels()) {
    put_u32(out, static_cast<std::uint32_t>(label.size()));
    out.append(label);
  }
  for (auto count : labels_.counts())
    put_u64(out, count);

  put_u64(out, keys_.size());
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    out.append(reinterpret_cast<const char *>(keys_[i].bytes.data()),
               keys_[i].bytes.size());
    auto entries = entries_at(i);
    put_u8(out, static_cast<std::uint8_t>(entries.size()));
    for (const auto &e : entries) {
      put_u32(out, e.label);
      put_u64(out, e.count);
    }
  }
  return out;
}

NGramDatabase NGramDatabase::deserialize(std::string_view bytes, std::string_view source) {
  ByteReader in(bytes, source);
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic)
    in.fail("not a STRIDE database (bad magic)");
  in.take(kMagic.size(), "magic");
  auto version = in.u32("format version");
  if (version != kDatabaseFormatVersion)
    in.fail("unsupported format version " + std::to_string(version) +
            " (expected " + std::to_string(kDatabaseFormatVersion) + ")");

  NGramDatabase db;
  auto meta_len = in.u32("metadata length");
  auto meta_text = in.take(meta_len, "metadata");
  try {
    auto meta = nlohmann::json::parse(meta_text);
    db.config_.task = parse_task(meta.at("task").get<std::string>());
    db.config_.schedule = SizeSchedule(meta.at("schedule").get<std::vector<std::uint32_t>>());
    db.config_.top_k = meta.at("k").get<std::uint32_t>();
    db.config_.normalization_digest = meta.at("normalization_digest").get<std::string>();
    db.config_.validate();
    const auto &stats = meta.at("stats");
    db.stats_.functions = stats.at("functions").get<std::uint64_t>();
    db.stats_.variables = stats.at("variables").get<std::uint64_t>();
    db.stats_.skipped_variables = stats.at("skipped_variables").get<std::uint64_t>();
  } catch (const nlohmann::json::exception &e) {
    in.fail(std::string("invalid metadata: ") + e.what());
  } catch (const Error &e) {
    in.fail(std::string("invalid metadata: ") + e.what());
  }

  auto label_count = in.u32("label count");
  std::vector<std::string> labels;
  labels.reserve(std::min<std::size_t>(label_count, in.remaining() / 4));
  for (std::uint32_t i = 0; i < label_count; ++i) {
    auto len = in.u32("label length");
    labels.emplace_back(in.take(len, "label"));
    if (i > 0 && !(labels[i - 1] < labels[i]))
      in.fail("label table is not sorted or has duplicates at index " +
              std::to_string(i));
  }
  std::vector<std::uint64_t> counts;
  counts.reserve(labels.size());
  for (std::uint32_t i = 0; i < label_count; ++i) {
    counts.push_back(in.u64("label count"));
    if (counts.back() == 0)
      in.fail("label '" + labels[i] + "' has zero global count");
  }
  db.labels_ = LabelTable(std::move(labels), std::move(counts));

  auto record_count = in.u64("record count");
  if (record_count > in.remaining() / 13)
    in.fail("truncated file: record count exceeds file size");
  db.keys_.reserve(record_count);
  db.offsets_.reserve(record_count + 1);
  for (std::uint64_t r = 0; r < record_count; ++r) {
    NGramKey key;
    auto raw = in.take(key.bytes.size(), "record key");
    std::memcpy(key.bytes.data(), raw.data(), key.bytes.size());
    if (!db.keys_.empty() && !(db.keys_.back() < key))
      in.fail("records are not in ascending key order at record " + std::to_string(r));
    auto n = in.u8("entry count");
    if (n == 0 || n > db.config_.top_k)
      in.fail("record " + std::to_string(r) + " has " + std::to_string(n) +
              " entries (K = " + std::to_string(db.config_.top_k) + ")");
    for (std::uint8_t i = 0; i < n; ++i) {
      Entry e;
      e.label = in.u32("entry label");
      e.count = in.u64("entry count");
      if (e.label >= label_count)
        in.fail("record " + std::to_string(r) + " references dangling label id " +
                std::to_string(e.label));
      if (e.count == 0)
        in.fail("record " + std::to_string(r) + " has a zero count");
      if (i > 0 && !entry_before(db.entries_.back(), e))
        in.fail("record " + std::to_string(r) + " entries are not in canonical order");
      db.entries_.push_back(e);
    }
    db.keys_.push_back(key);
    db.offsets_.push_back(db.entries_.size());
  }
  if (in.remaining() != 0)
    in.fail("trailing bytes after last record");
  return db;
}

void NGramDatabase::save(const std::filesystem::path &path) const {
  auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error("cannot write database " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw Error("write failed: " + path.string());
}

NGramDatabase NGramDatabase::load(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("cannot open database " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes, path.string());
}

} // namespace stride
