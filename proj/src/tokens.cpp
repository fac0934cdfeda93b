#include "stride/tokens.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include <nlohmann/json.hpp>

#include "stride/error.hpp"
#include "stride/sha256.hpp"

namespace stride {

namespace {

bool starts_with_ci(std::string_view text, std::string_view prefix) {
  if (text.size() < prefix.size())
    return false;
  return std::equal(prefix.begin(), prefix.end(), text.begin(),
                    [](char a, char b) {
                      return std::tolower(static_cast<unsigned char>(a)) ==
                             std::tolower(static_cast<unsigned char>(b));
                    });
}

bool is_hex_digit(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') ||
         (c >= 'A' && c <= 'F');
}

bool is_dec_digit(char c) { return c >= '0' && c <= '9'; }

// Drops C/MSVC integer suffixes ("u", "LL", "ull", "i64", "ui64").
std::string_view strip_integer_suffix(std::string_view text) {
  for (std::string_view msvc : {"ui64", "i64"}) {
    if (text.size() > msvc.size() &&
        starts_with_ci(text.substr(text.size() - msvc.size()), msvc)) {
      return text.substr(0, text.size() - msvc.size());
    }
  }
  std::size_t dropped = 0;
  while (dropped < 3 && text.size() > 1) {
    char c = text.back();
    if (c != 'u' && c != 'U' && c != 'l' && c != 'L')
      break;
    text.remove_suffix(1);
    ++dropped;
  }
  return text;
}

struct IntegerLiteral {
  // Number of hexadecimal digits in the magnitude, without leading zeros.
  std::size_t hex_digits = 0;
  // Saturated at UINT64_MAX when the literal does not fit.
  std::uint64_t value = 0;
};

std::size_t hex_digit_count(std::uint64_t value) {
  std::size_t digits = 1;
  while (value >>= 4)
    ++digits;
  return digits;
}

std::optional<IntegerLiteral> parse_integer_literal(std::string_view token) {
  if (token.empty() || !is_dec_digit(token.front()))
    return std::nullopt;
  std::string_view body = strip_integer_suffix(token);

  if (body.size() >= 2 && body[0] == '0' && (body[1] == 'x' || body[1] == 'X')) {
    std::string_view digits = body.substr(2);
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), is_hex_digit))
      return std::nullopt;
    auto first = digits.find_first_not_of('0');
    if (first == std::string_view::npos)
      return IntegerLiteral{1, 0};
    digits = digits.substr(first);
    if (digits.size() > 16)
      return IntegerLiteral{digits.size(), UINT64_MAX};
    std::uint64_t value = 0;
    std::from_chars(digits.data(), digits.data() + digits.size(), value, 16);
    return IntegerLiteral{digits.size(), value};
  }

  if (!std::all_of(body.begin(), body.end(), is_dec_digit))
    return std::nullopt;
  std::uint64_t value = 0;
  auto [end, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
  if (ec != std::errc{} || end != body.data() + body.size())
    return std::nullopt; // out of range: left as is
  return IntegerLiteral{hex_digit_count(value), value};
}

bool is_float_literal(std::string_view token) {
  if (token.empty())
    return false;
  if (!is_dec_digit(token.front()) &&
      !(token.front() == '.' && token.size() > 1 && is_dec_digit(token[1])))
    return false;
  if (token.size() > 1 && (token.back() == 'f' || token.back() == 'F' ||
                           token.back() == 'l' || token.back() == 'L'))
    token.remove_suffix(1);
  double value = 0;
  auto [end, ec] = std::from_chars(token.data(), token.data() + token.size(),
                                   value, std::chars_format::general);
  return ec == std::errc{} && end == token.data() + token.size();
}

bool is_string_literal(std::string_view token) {
  // Accept encoding prefixes such as L"..", u8"..".
  auto quote = token.find('"');
  if (quote == std::string_view::npos || quote > 2 || token.size() < quote + 2)
    return false;
  return token.back() == '"';
}

const PrefixRule *match_prefix(std::string_view token,
                               const std::vector<PrefixRule> &rules) {
  for (const auto &rule : rules) {
    if (token.starts_with(rule.prefix))
      return &rule;
  }
  return nullptr;
}

std::string trim(std::string_view line) {
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  };
  while (!line.empty() && is_space(line.front()))
    line.remove_prefix(1);
  while (!line.empty() && is_space(line.back()))
    line.remove_suffix(1);
  return std::string(line);
}

template <typename Fn>
void for_each_config_line(const std::filesystem::path &path, Fn &&fn) {
  std::ifstream in(path);
  if (!in)
    throw Error("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    std::string_view view = line;
    auto first = view.find_first_not_of(" \t");
    if (first == std::string_view::npos || view[first] == '#')
      continue;
    fn(view, line_no);
  }
}

} // namespace

std::string_view to_string(LiteralMode mode) {
  return mode == LiteralMode::raw ? "raw" : "pre_normalized";
}

LiteralMode parse_literal_mode(std::string_view text) {
  if (text == "raw")
    return LiteralMode::raw;
  if (text == "pre_normalized")
    return LiteralMode::pre_normalized;
  throw Error("unknown literal mode '" + std::string(text) +
              "' (expected raw or pre_normalized)");
}

std::vector<PrefixRule> NormalizationConfig::default_prefix_rules() {
  static const char *const kPrefixes[] = {
      "LAB_",    "FUN_",    "DAT_",    "SUB_",    "UNK_",    "PTR_",
      "ARRAY_",  "switchD_", "caseD_", "joined_r", "uRam",   "iRam",
      "fRam",    "dRam",    "cRam",    "sRam",    "lRam",    "uStack_",
      "iStack_", "fStack_", "dStack_", "cStack_", "sStack_", "lStack_",
      "aStack_"};
  std::vector<PrefixRule> rules;
  for (const char *p : kPrefixes)
    rules.push_back({p, p});
  return rules;
}

void NormalizationConfig::validate() const {
  for (std::size_t i = 0; i < address_prefixes.size(); ++i) {
    const auto &rule = address_prefixes[i];
    if (rule.prefix.empty())
      throw Error("normalization: empty address prefix");
    if (rule.replacement.empty())
      throw Error("normalization: empty replacement for prefix '" +
                  rule.prefix + "'");
    for (std::size_t j = 0; j < address_prefixes.size(); ++j) {
      if (i != j && address_prefixes[j].prefix.starts_with(rule.prefix))
        throw Error("normalization: prefix '" + rule.prefix +
                    "' overlaps prefix '" + address_prefixes[j].prefix + "'");
    }
  }

  std::vector<std::string> fixed_points = {std::string(kUnknownToken),
                                           std::string(kStringToken),
                                           std::string(kNumberToken)};
  for (int d = 1; d <= 32; ++d)
    fixed_points.push_back(std::string(kNumBucketPrefix) + std::to_string(d));
  for (const auto &rule : address_prefixes)
    fixed_points.push_back(rule.replacement);
  for (const auto &token : fixed_points) {
    if (normalize_token(token, *this) != token)
      throw Error("normalization: token '" + token +
                  "' would be rewritten by the prefix rules");
  }
}

std::string NormalizationConfig::digest() const {
  nlohmann::json j;
  nlohmann::json prefixes = nlohmann::json::array();
  for (const auto &rule : address_prefixes)
    prefixes.push_back({rule.prefix, rule.replacement});
  j["address_prefixes"] = std::move(prefixes);
  j["numeric_threshold"] = numeric_threshold;
  j["literal_mode"] = to_string(literal_mode);
  if (strip_identifiers) {
    j["strip_identifiers"] = nlohmann::json(std::vector<std::string>(
        strip_identifiers->begin(), strip_identifiers->end()));
  } else {
    j["strip_identifiers"] = nullptr;
  }
  auto digest = sha256(j.dump());
  return to_hex(digest);
}

std::set<std::string, std::less<>> default_identifier_whitelist() {
  return {
      // keywords and types
      "if", "else", "while", "for", "do", "switch", "case", "default",
      "break", "continue", "return", "goto", "sizeof", "struct", "union",
      "enum", "const", "volatile", "unsigned", "signed", "void", "char",
      "short", "int", "long", "float", "double", "bool", "__int8", "__int16",
      "__int32", "__int64", "_BYTE", "_WORD", "_DWORD", "_QWORD", "_OWORD",
      "_BOOL1", "_BOOL4", "String", "Number",
      // punctuation
      "{", "}", "(", ")", "[", "]", ";", ",", ":", "?", ".", "->",
      // operators
      "=", "==", "!=", "<", ">", "<=", ">=", "+", "-", "*", "/", "%", "++",
      "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", "&",
      "|", "^", "~", "!", "&&", "||", "<<", ">>"};
}

Token normalize_token(std::string_view token, const NormalizationConfig &config) {
  if (const auto *rule = match_prefix(token, config.address_prefixes))
    return rule->replacement;

  if (auto literal = parse_integer_literal(token)) {
    if (literal->value >= config.numeric_threshold)
      return std::string(kNumBucketPrefix) + std::to_string(literal->hex_digits);
    if (config.literal_mode == LiteralMode::raw)
      return std::string(kNumberToken);
    return std::string(token);
  }

  if (config.literal_mode == LiteralMode::raw) {
    if (is_string_literal(token))
      return std::string(kStringToken);
    if (is_float_literal(token))
      return std::string(kNumberToken);
  }
  return std::string(token);
}

std::vector<Token> normalize_function(std::span<const Token> tokens,
                                      const NormalizationConfig &config,
                                      std::span<const std::size_t> var_positions) {
  std::vector<Token> out;
  out.reserve(tokens.size());
  for (const auto &t : tokens)
    out.push_back(normalize_token(t, config));
  if (config.strip_identifiers)
    out = strip_identifiers(out, var_positions, *config.strip_identifiers);
  return out;
}

std::vector<Token>
strip_identifiers(std::span<const Token> tokens,
                  std::span<const std::size_t> var_positions,
                  const std::set<std::string, std::less<>> &whitelist) {
  std::vector<Token> out;
  out.reserve(tokens.size());
  auto var_it = var_positions.begin();
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    while (var_it != var_positions.end() && *var_it < i)
      ++var_it;
    bool is_var = var_it != var_positions.end() && *var_it == i;
    if (is_var || whitelist.contains(tokens[i]))
      out.push_back(tokens[i]);
    else
      out.emplace_back(kUnknownToken);
  }
  return out;
}

std::vector<PrefixRule> load_prefix_file(const std::filesystem::path &path) {
  std::vector<PrefixRule> rules;
  for_each_config_line(path, [&](std::string_view line, std::size_t line_no) {
    auto tab = line.find('\t');
    std::string prefix = trim(line.substr(0, tab));
    std::string replacement =
        tab == std::string_view::npos ? prefix : trim(line.substr(tab + 1));
    if (prefix.empty())
      throw Error(path.string() + ":" + std::to_string(line_no) +
                  ": empty prefix");
    if (replacement.empty())
      replacement = prefix;
    rules.push_back({std::move(prefix), std::move(replacement)});
  });
  return rules;
}

std::set<std::string, std::less<>>
load_whitelist_file(const std::filesystem::path &path) {
  std::set<std::string, std::less<>> tokens;
  for_each_config_line(path, [&](std::string_view line, std::size_t) {
    tokens.insert(trim(line));
  });
  return tokens;
}

} // namespace stride
