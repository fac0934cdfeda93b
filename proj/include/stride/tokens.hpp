#pragma once

// Token normalization applied to decompiler output before any N-gram is
// formed. Normalization is strictly element-wise: it never inserts or removes
// tokens, so variable-occurrence indices stay valid across it.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace stride {

using Token = std::string;

// Reserved output tokens.
inline constexpr std::string_view kUnknownToken = "?";
inline constexpr std::string_view kStringToken = "String";
inline constexpr std::string_view kNumberToken = "Number";
inline constexpr std::string_view kNumBucketPrefix = "NUM_";

enum class LiteralMode {
  // Strings and small numbers were already replaced by the dataset pipeline.
  pre_normalized,
  // Literals appear verbatim and are folded into "String" / "Number" here.
  raw,
};

std::string_view to_string(LiteralMode mode);
LiteralMode parse_literal_mode(std::string_view text);

// A token starting with `prefix` is replaced by `replacement` as a whole.
struct PrefixRule {
  std::string prefix;
  std::string replacement;

  friend bool operator==(const PrefixRule &, const PrefixRule &) = default;
};

struct NormalizationConfig {
  std::vector<PrefixRule> address_prefixes = default_prefix_rules();
  std::uint64_t numeric_threshold = 0x100;
  LiteralMode literal_mode = LiteralMode::pre_normalized;
  // When set, every token outside the whitelist (other than variable
  // occurrences) becomes "?".
  std::optional<std::set<std::string, std::less<>>> strip_identifiers;

  static std::vector<PrefixRule> default_prefix_rules();

  // Throws stride::Error when a prefix is empty, two prefixes overlap, or a
  // replacement/reserved token would not be a fixed point of normalization.
  void validate() const;

  // Hex SHA-256 over a canonical rendering of every field. Stored in
  // databases to detect train/predict normalization drift.
  std::string digest() const;

  friend bool operator==(const NormalizationConfig &,
                         const NormalizationConfig &) = default;
};

// Built-in tokens kept by identifier stripping: C keywords, common
// decompiler type names, punctuation and operators.
std::set<std::string, std::less<>> default_identifier_whitelist();

Token normalize_token(std::string_view token, const NormalizationConfig &config);

// `var_positions` must be sorted ascending. Positions listed there are exempt
// from identifier stripping.
std::vector<Token> normalize_function(std::span<const Token> tokens,
                                      const NormalizationConfig &config,
                                      std::span<const std::size_t> var_positions = {});

std::vector<Token>
strip_identifiers(std::span<const Token> tokens,
                  std::span<const std::size_t> var_positions,
                  const std::set<std::string, std::less<>> &whitelist);

// "PREFIX<TAB>REPLACEMENT" per line, replacement optional; '#' comments.
std::vector<PrefixRule> load_prefix_file(const std::filesystem::path &path);
// One token per line; '#' comments.
std::set<std::string, std::less<>>
load_whitelist_file(const std::filesystem::path &path);

} // namespace stride
