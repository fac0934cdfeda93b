#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "stride/corpus.hpp"
#include "stride/error.hpp"
#include "stride/sha256.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

namespace stride {
namespace {

FunctionRecord sample_record() {
  FunctionRecord r;
  r.fn_id = "f1";
  r.bin_id = "b1";
  r.tokens = {"int", "v1", "=", "v2", "+", "0x10", ";"};
  r.var_occurrences = {{1, "v1"}, {3, "v2"}};
  r.labels = {{"v1", {"total", "int"}}, {"v2", {"len", "size_t"}}};
  return r;
}

TEST(ReadCorpus, EmptyFileYieldsNothing) {
  testing::TempDir dir;
  testing::write_file(dir / "empty.jsonl", "");
  EXPECT_TRUE(read_corpus(dir / "empty.jsonl", {}).empty());
  testing::write_file(dir / "blank.jsonl", "\n  \n");
  EXPECT_TRUE(read_corpus(dir / "blank.jsonl", {}).empty());
}

TEST(ReadCorpus, WellFormedLineIsNormalized) {
  testing::TempDir dir;
  testing::write_file(dir / "c.jsonl",
                      R"j({"fn_id":"f","bin_id":"b","tokens":["if","(","v1","==","0x114b28",")"],)j"
                      R"("var_occurrences":[[2,"v1"]],"labels":{"v1":{"name":"n","type":null}},)"
                      R"("extra":"ignored"})"
                      "\n");
  auto records = read_corpus(dir / "c.jsonl", {});
  ASSERT_EQ(records.size(), 1u);
  const auto &r = records[0];
  std::vector<Token> raw = {"if", "(", "v1", "==", "0x114b28", ")"};
  std::vector<std::size_t> vars = {2};
  EXPECT_EQ(r.tokens, normalize_function(raw, {}, vars));
  EXPECT_EQ(r.tokens[4], "NUM_6");
  EXPECT_EQ(r.labels.at("v1").name, "n");
  EXPECT_FALSE(r.labels.at("v1").type.has_value());
}

TEST(ReadCorpus, OutOfRangeOccurrenceNamesFunction) {
  testing::TempDir dir;
  testing::write_file(dir / "c.jsonl",
                      R"({"fn_id":"bad_fn","bin_id":"b","tokens":["a","b"],)"
                      R"("var_occurrences":[[5,"v1"]],"labels":{"v1":{"name":"x"}}})"
                      "\n");
  try {
    read_corpus(dir / "c.jsonl", {});
    FAIL() << "expected an error";
  } catch (const Error &e) {
    std::string what = e.what();
    EXPECT_NE(what.find("bad_fn"), std::string::npos) << what;
    EXPECT_NE(what.find("out of range"), std::string::npos) << what;
  }
}

TEST(ReadCorpus, MalformedLineCarriesLineNumber) {
  testing::TempDir dir;
  auto good = record_to_json(sample_record()).dump();
  testing::write_file(dir / "c.jsonl", good + "\n{not json\n");
  try {
    read_corpus(dir / "c.jsonl", {});
    FAIL() << "expected an error";
  } catch (const Error &e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(ValidateRecord, InvariantViolations) {
  auto expect_error = [](FunctionRecord r, const std::string &needle) {
    try {
      validate_record(r);
      FAIL() << "expected error containing " << needle;
    } catch (const Error &e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  auto r = sample_record();
  r.var_occurrences.push_back({1, "v2"});
  expect_error(r, "more than one occurrence");

  r = sample_record();
  r.var_occurrences.push_back({0, "v9"});
  expect_error(r, "no labels entry");

  r = sample_record();
  r.labels["ghost"] = {};
  expect_error(r, "no occurrences");

  r = sample_record();
  r.tokens[0] = "bad\xff";
  expect_error(r, "0xFF");

  r = sample_record();
  r.tokens[0] = "";
  expect_error(r, "empty");
}

TEST(ReadCorpus, DuplicateFnIdRejected) {
  testing::TempDir dir;
  auto line = record_to_json(sample_record()).dump();
  testing::write_file(dir / "c.jsonl", line + "\n" + line + "\n");
  EXPECT_THROW(read_corpus(dir / "c.jsonl", {}), Error);
}

TEST(ReadCorpus, SameBytesSameRecords) {
  testing::TempDir dir;
  testing::SyntheticLanguage lang(5);
  auto records = lang.functions(30, "f");
  write_corpus(dir / "c.jsonl", records);
  auto a = read_corpus(dir / "c.jsonl", {});
  auto b = read_corpus(dir / "c.jsonl", {});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, records);
}

TEST(FunctionRecord, VariablesInFirstOccurrenceOrder) {
  FunctionRecord r = sample_record();
  r.var_occurrences = {{3, "v2"}, {1, "v1"}, {5, "v2"}};
  EXPECT_EQ(r.variables(), (std::vector<std::string>{"v1", "v2"}));
}

TEST(Fingerprint, InvariantUnderPlaceholderRenaming) {
  auto a = sample_record();
  auto b = sample_record();
  b.tokens[1] = "a1";
  b.tokens[3] = "a2";
  b.var_occurrences = {{1, "a1"}, {3, "a2"}};
  b.labels = {{"a1", {}}, {"a2", {}}};
  EXPECT_EQ(function_fingerprint(a), function_fingerprint(b));

  auto c = sample_record();
  c.tokens[4] = "-";
  EXPECT_NE(function_fingerprint(a), function_fingerprint(c));

  // Swapping which variable comes first is a different structure only if
  // the usage pattern differs; same pattern, swapped keys, equal digest.
  auto d = sample_record();
  d.var_occurrences = {{1, "v2"}, {3, "v1"}};
  EXPECT_EQ(function_fingerprint(a), function_fingerprint(d));
}

TEST(Fingerprint, GoldenValue) {
  // SHA-256("int" FF "@var_1@" FF "=" FF "@var_2@" FF "+" FF "0x10" FF ";" FF "fn")[:12],
  // computed with Python's hashlib.
  auto fp = function_fingerprint(sample_record());
  EXPECT_EQ(to_hex(fp), "8ef46d4866ae84ebdc519a5c");

  FunctionRecord empty;
  empty.fn_id = "e";
  EXPECT_EQ(to_hex(function_fingerprint(empty)), "0f1e18bb4143dc4be22e61ea");
}

TEST(FingerprintProperties, BijectiveRenamingOfKeys) {
  testing::SyntheticLanguage lang(21);
  for (const auto &record : lang.functions(50, "f")) {
    FunctionRecord renamed = record;
    std::map<std::string, std::string> mapping;
    for (const auto &key : record.variables())
      mapping[key] = "zz_" + key + "_x";
    for (auto &occ : renamed.var_occurrences) {
      occ.var_key = mapping[occ.var_key];
      renamed.tokens[occ.token_index] = occ.var_key;
    }
    renamed.labels.clear();
    for (const auto &[key, label] : record.labels)
      renamed.labels[mapping[key]] = label;
    EXPECT_EQ(function_fingerprint(record), function_fingerprint(renamed));
  }
}

} // namespace
} // namespace stride
