#pragma once

// Side-tagged N-gram contexts around variable occurrences and their database
// keys.
//
// Key encoding (bit-exact): for canonical tokens t1..tN and side D,
//   B = t1 0xFF t2 0xFF ... tN 0xFF D        (D = "left" | "right")
//   key = SHA-256(B)[0..12)

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stride/corpus.hpp"

namespace stride {

enum class Side : std::uint8_t { left, right };

std::string_view to_string(Side side);
Side parse_side(std::string_view text);

inline constexpr std::array<Side, 2> kSides = {Side::left, Side::right};

// Strictly descending list of positive N-gram sizes.
class SizeSchedule {
public:
  SizeSchedule() : SizeSchedule(default_sizes()) {}
  explicit SizeSchedule(std::vector<std::uint32_t> sizes);

  static std::vector<std::uint32_t> default_sizes();
  // "60,30,15" style list.
  static SizeSchedule parse(std::string_view text);

  const std::vector<std::uint32_t> &sizes() const { return sizes_; }
  std::size_t size() const { return sizes_.size(); }
  std::uint32_t largest() const { return sizes_.front(); }
  std::string to_string() const;

  friend bool operator==(const SizeSchedule &, const SizeSchedule &) = default;

private:
  std::vector<std::uint32_t> sizes_;
};

struct NGramKey {
  std::array<std::uint8_t, 12> bytes{};

  std::string hex() const;
  static std::optional<NGramKey> from_hex(std::string_view hex);

  friend auto operator<=>(const NGramKey &, const NGramKey &) = default;
  friend bool operator==(const NGramKey &, const NGramKey &) = default;
};

struct NGramKeyHash {
  std::size_t operator()(const NGramKey &key) const noexcept;
};

// Variable occurrence inside a context window: window-relative index and the
// variable it belongs to.
struct WindowVar {
  std::size_t index = 0;
  std::string_view var_key;
};

struct ContextWindow {
  std::span<const Token> tokens;
  std::vector<WindowVar> vars;
};

// Plain slice: left is tokens[occ-n, occ), right is tokens(occ, occ+n].
// Absent when fewer than n tokens are available on that side.
std::optional<std::span<const Token>>
extract_context(std::span<const Token> tokens, std::size_t occ_index, Side side,
                std::size_t n);

// Same slice, carrying which window positions are variable occurrences.
std::optional<ContextWindow> extract_window(const VariableLayout &layout,
                                            std::size_t occ_index, Side side,
                                            std::size_t n);

// Replaces variable positions with @var_k@, k numbered by first appearance
// of each var_key scanning the window left to right.
std::vector<Token> canonicalize(std::span<const Token> ngram,
                                std::span<const WindowVar> vars);

std::string canonical_var_token(std::size_t ordinal);

// Throws stride::Error if a token contains byte 0xFF.
NGramKey hash_ngram(std::span<const Token> canonical, Side side);

// Shared by N-gram keys and function fingerprints: SHA-256 over the 0xFF
// separated tokens followed by `discriminator`, truncated to 12 bytes.
std::array<std::uint8_t, 12>
truncated_token_hash(std::span<const std::string_view> tokens,
                     std::string_view discriminator);

// Canonicalize + hash without materializing token strings. `scratch` is
// reused between calls.
NGramKey window_key(const ContextWindow &window, Side side, std::string &scratch);

struct NGramEntry {
  std::size_t occ_index = 0;
  Side side = Side::left;
  std::uint32_t n = 0;
  NGramKey key;

  friend bool operator==(const NGramEntry &, const NGramEntry &) = default;
};

// Every present (occurrence, side, n) context of `var_key`, ordered by
// occurrence, then left before right, then schedule order. Throws if the
// variable is not in the record.
std::vector<NGramEntry> enumerate_ngrams(const VariableLayout &layout,
                                         std::string_view var_key,
                                         const SizeSchedule &schedule);
std::vector<NGramEntry> enumerate_ngrams(const FunctionRecord &record,
                                         std::string_view var_key,
                                         const SizeSchedule &schedule);

} // namespace stride
