#include "stride/ngram.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>

#include "stride/error.hpp"
#include "stride/sha256.hpp"

namespace stride {

namespace {

constexpr char kSeparator = '\xff';

void append_token(std::string &out, std::string_view token) {
  if (token.find(kSeparator) != std::string_view::npos)
    throw Error("token contains reserved byte 0xFF: cannot hash N-gram");
  out.append(token);
  out.push_back(kSeparator);
}

std::array<std::uint8_t, 12> truncate(const Sha256Digest &digest) {
  std::array<std::uint8_t, 12> out{};
  std::copy_n(digest.begin(), out.size(), out.begin());
  return out;
}

} // namespace

std::string_view to_string(Side side) {
  return side == Side::left ? "left" : "right";
}

Side parse_side(std::string_view text) {
  if (text == "left")
    return Side::left;
  if (text == "right")
    return Side::right;
  throw Error("unknown side '" + std::string(text) + "' (expected left or right)");
}

SizeSchedule::SizeSchedule(std::vector<std::uint32_t> sizes)
    : sizes_(std::move(sizes)) {
  if (sizes_.empty())
    throw Error("size schedule must not be empty");
  for (std::size_t i = 0; i < sizes_.size(); ++i) {
    if (sizes_[i] < 1)
      throw Error("size schedule entries must be >= 1");
    if (i > 0 && sizes_[i] >= sizes_[i - 1])
      throw Error("size schedule must be strictly descending: " + to_string());
  }
}

std::vector<std::uint32_t> SizeSchedule::default_sizes() {
  return {60, 30, 15, 14, 13, 12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2};
}

SizeSchedule SizeSchedule::parse(std::string_view text) {
  std::vector<std::uint32_t> sizes;
  while (!text.empty()) {
    auto comma = text.find(',');
    auto item = text.substr(0, comma);
    while (!item.empty() && item.front() == ' ')
      item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ')
      item.remove_suffix(1);
    std::uint32_t value = 0;
    auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (item.empty() || ec != std::errc{} || end != item.data() + item.size())
      throw Error("invalid size schedule entry '" + std::string(item) + "'");
    sizes.push_back(value);
    if (comma == std::string_view::npos)
      break;
    text.remove_prefix(comma + 1);
  }
  return SizeSchedule(std::move(sizes));
}

std::string SizeSchedule::to_string() const {
  std::string out;
  for (auto n : sizes_) {
    if (!out.empty())
      out.push_back(',');
    out += std::to_string(n);
  }
  return out;
}

std::string NGramKey::hex() const { return to_hex(bytes); }

std::optional<NGramKey> NGramKey::from_hex(std::string_view hex) {
  if (hex.size() != 24)
    return std::nullopt;
  NGramKey key;
  for (std::size_t i = 0; i < key.bytes.size(); ++i) {
    auto [end, ec] = std::from_chars(hex.data() + 2 * i, hex.data() + 2 * i + 2,
                                     key.bytes[i], 16);
    if (ec != std::errc{} || end != hex.data() + 2 * i + 2)
      return std::nullopt;
  }
  return key;
}

std::size_t NGramKeyHash::operator()(const NGramKey &key) const noexcept {
  // Keys are already uniformly distributed.
  std::size_t h = 0;
  std::memcpy(&h, key.bytes.data(), sizeof(h));
  return h;
}

std::optional<std::span<const Token>>
extract_context(std::span<const Token> tokens, std::size_t occ_index, Side side,
                std::size_t n) {
  if (occ_index >= tokens.size() || n == 0)
    return std::nullopt;
  if (side == Side::left) {
    if (occ_index < n)
      return std::nullopt;
    return tokens.subspan(occ_index - n, n);
  }
  if (occ_index + n >= tokens.size())
    return std::nullopt;
  return tokens.subspan(occ_index + 1, n);
}

std::optional<ContextWindow> extract_window(const VariableLayout &layout,
                                            std::size_t occ_index, Side side,
                                            std::size_t n) {
  const auto &tokens = layout.record().tokens;
  auto slice = extract_context(tokens, occ_index, side, n);
  if (!slice)
    return std::nullopt;
  ContextWindow window{*slice, {}};
  std::size_t start = side == Side::left ? occ_index - n : occ_index + 1;
  for (std::size_t i = 0; i < n; ++i) {
    auto slot = layout.slot_at(start + i);
    if (slot != VariableLayout::kNoVariable)
      window.vars.push_back({i, layout.var_keys()[slot]});
  }
  return window;
}

std::string canonical_var_token(std::size_t ordinal) {
  return "@var_" + std::to_string(ordinal) + "@";
}

std::vector<Token> canonicalize(std::span<const Token> ngram,
                                std::span<const WindowVar> vars) {
  std::vector<Token> out(ngram.begin(), ngram.end());
  std::vector<std::string_view> seen;
  std::vector<WindowVar> ordered(vars.begin(), vars.end());
  std::sort(ordered.begin(), ordered.end(),
            [](const WindowVar &a, const WindowVar &b) { return a.index < b.index; });
  for (const auto &var : ordered) {
    auto it = std::find(seen.begin(), seen.end(), var.var_key);
    if (it == seen.end()) {
      seen.push_back(var.var_key);
      it = seen.end() - 1;
    }
    out.at(var.index) = canonical_var_token(static_cast<std::size_t>(it - seen.begin()) + 1);
  }
  return out;
}

std::array<std::uint8_t, 12>
truncated_token_hash(std::span<const std::string_view> tokens,
                     std::string_view discriminator) {
  std::string preimage;
  for (auto t : tokens)
    append_token(preimage, t);
  preimage.append(discriminator);
  return truncate(sha256(preimage));
}

NGramKey hash_ngram(std::span<const Token> canonical, Side side) {
  if (canonical.empty())
    throw Error("cannot hash an empty N-gram");
  std::string preimage;
  for (const auto &t : canonical)
    append_token(preimage, t);
  preimage.append(to_string(side));
  return NGramKey{truncate(sha256(preimage))};
}

NGramKey window_key(const ContextWindow &window, Side side, std::string &scratch) {
  scratch.clear();
  // Windows rarely hold more than a handful of distinct variables.
  std::array<std::string_view, 16> seen_small;
  std::vector<std::string_view> seen_large;
  std::size_t seen_count = 0;
  auto ordinal_of = [&](std::string_view key) -> std::size_t {
    for (std::size_t i = 0; i < std::min(seen_count, seen_small.size()); ++i)
      if (seen_small[i] == key)
        return i + 1;
    for (std::size_t i = 0; i < seen_large.size(); ++i)
      if (seen_large[i] == key)
        return seen_small.size() + i + 1;
    if (seen_count < seen_small.size())
      seen_small[seen_count] = key;
    else
      seen_large.push_back(key);
    return ++seen_count;
  };

  auto var_it = window.vars.begin();
  for (std::size_t i = 0; i < window.tokens.size(); ++i) {
    if (var_it != window.vars.end() && var_it->index == i) {
      scratch.append("@var_");
      scratch.append(std::to_string(ordinal_of(var_it->var_key)));
      scratch.push_back('@');
      scratch.push_back(kSeparator);
      ++var_it;
    } else {
      append_token(scratch, window.tokens[i]);
    }
  }
  scratch.append(to_string(side));
  return NGramKey{truncate(sha256(scratch))};
}

std::vector<NGramEntry> enumerate_ngrams(const VariableLayout &layout,
                                         std::string_view var_key,
                                         const SizeSchedule &schedule) {
  auto slot = layout.find(var_key);
  if (!slot)
    throw Error("function '" + layout.record().fn_id + "' has no variable '" +
                std::string(var_key) + "'");
  std::vector<NGramEntry> entries;
  std::string scratch;
  for (auto occ : layout.occurrences(*slot)) {
    for (auto side : kSides) {
      for (auto n : schedule.sizes()) {
        auto window = extract_window(layout, occ, side, n);
        if (!window)
          continue;
        entries.push_back({occ, side, n, window_key(*window, side, scratch)});
      }
    }
  }
  return entries;
}

std::vector<NGramEntry> enumerate_ngrams(const FunctionRecord &record,
                                         std::string_view var_key,
                                         const SizeSchedule &schedule) {
  VariableLayout layout(record);
  return enumerate_ngrams(layout, var_key, schedule);
}

} // namespace stride
