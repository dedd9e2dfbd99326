#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <sstream>

#include "narrshift/corpus.hpp"
#include "narrshift/util.hpp"
#include "support.hpp"

using namespace narrshift;

namespace {

IngestResult ingest_text(const std::string& text, IngestMode mode = IngestMode::kStrict) {
  std::istringstream in(text);
  return ingest_jsonl_stream(in, mode);
}

TokenizerRules rules_with(std::set<std::string, std::less<>> stopwords) {
  TokenizerRules r;
  r.stopwords = std::move(stopwords);
  return r;
}

}  // namespace

TEST_CASE("ingest maps fields directly") {
  auto r = ingest_text(R"({"id":"a1","date":"2009-01-05","text":"Fed raises rates"})" "\n");
  REQUIRE(r.records.size() == 1);
  CHECK(r.records[0].id == "a1");
  CHECK(r.records[0].date == Date{2009, 1, 5});
  CHECK(r.records[0].text == "Fed raises rates");
}

TEST_CASE("ingest of an empty file is empty") {
  CHECK(ingest_text("").records.empty());
  testing::TempDir dir;
  write_file(dir / "empty.jsonl", "");
  CHECK(ingest_jsonl(dir / "empty.jsonl").records.empty());
}

TEST_CASE("strict ingest rejects a bad date with its line number") {
  const std::string text = R"({"id":"a1","date":"Jan 5 2009","text":"x"})" "\n";
  try {
    ingest_text(text);
    FAIL("expected an error");
  } catch (const CorpusError& e) {
    const std::string what = e.what();
    CHECK(what.find("line 1") != std::string::npos);
    CHECK(what.find("bad date") != std::string::npos);
  }
}

TEST_CASE("skip mode reports malformed lines and keeps the rest in order") {
  const std::string text = R"({"id":"a","date":"2009-01-05","text":"one"})" "\n"
                           "not json\n"
                           R"({"id":"b","date":"2009-02-30","text":"two"})" "\n"
                           R"({"id":"c","date":"2009-01-06"})" "\n"
                           R"({"id":"d","date":"2009-01-07","text":"four"})" "\n";
  auto r = ingest_text(text, IngestMode::kSkipWithReport);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0].id == "a");
  CHECK(r.records[1].id == "d");
  REQUIRE(r.skipped.size() == 3);
  CHECK(r.skipped[0].line == 2);
  CHECK(r.skipped[1].line == 3);
  CHECK(r.skipped[2].line == 4);
}

TEST_CASE("dates are parsed strictly") {
  CHECK(Date::parse("2024-02-29").has_value());
  CHECK_FALSE(Date::parse("2023-02-29").has_value());
  CHECK_FALSE(Date::parse("2023-1-05").has_value());
  CHECK_FALSE(Date::parse("2023-01-05T00:00").has_value());
  CHECK(Date::parse("2014-10-05")->to_string() == "2014-10-05");
}

TEST_CASE("tokenize applies lowercasing, stopwords and minimum length") {
  CHECK(tokenize("The Fed raised Rates.", rules_with({"the"})) ==
        std::vector<std::string>{"fed", "raised", "rates"});
  CHECK(tokenize("", rules_with({})).empty());
  CHECK(tokenize("U.S.-China trade", rules_with({})) ==
        std::vector<std::string>{"china", "trade"});
}

TEST_CASE("tokenize drops digit-only tokens and handles non-ASCII words") {
  auto r = rules_with({});
  CHECK(tokenize("In 2014 the G20 met", r) == std::vector<std::string>{"the", "g20", "met"});
  r.strip_numeric = false;
  CHECK(tokenize("In 2014", r) == std::vector<std::string>{"2014"});
  CHECK(tokenize("Über Ärzte in Zürich", rules_with({})) ==
        std::vector<std::string>{"über", "ärzte", "zürich"});
}

TEST_CASE("default rules remove common English stopwords") {
  const auto t = tokenize("The market and the bank", TokenizerRules::defaults());
  CHECK(t == std::vector<std::string>{"market", "bank"});
}

TEST_CASE("vocabulary threshold and tie rule") {
  using S = std::vector<std::vector<std::string>>;
  auto v = build_vocabulary(S{{"a", "a", "b"}}, 2);
  REQUIRE(v.size() == 1);
  CHECK(v.word(0) == "a");

  auto w = build_vocabulary(S{{"b", "a"}}, 1);
  REQUIRE(w.size() == 2);
  CHECK(w.word(0) == "a");
  CHECK(w.word(1) == "b");

  CHECK_THROWS_AS(build_vocabulary(S{{"a"}}, 2), CorpusError);
  CHECK_THROWS_AS(build_vocabulary(S{{"a"}}, 0), CorpusError);
}

TEST_CASE("vocabulary ids follow descending frequency") {
  using S = std::vector<std::vector<std::string>>;
  auto v = build_vocabulary(S{{"c", "b", "b"}, {"c", "c", "a"}}, 1);
  CHECK(v.words() == std::vector<std::string>{"c", "b", "a"});
  CHECK(v.count(0) == 3);
  CHECK(*v.find("b") == 1);
  CHECK_FALSE(v.find("zzz").has_value());
}

TEST_CASE("monthly chunks keep empty months") {
  std::vector<Document> docs(3);
  docs[0].date = {2009, 1, 5};
  docs[1].date = {2009, 1, 20};
  docs[2].date = {2009, 3, 1};
  auto chunks = assign_chunks(docs);
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].documents.size() == 2);
  CHECK(chunks[1].documents.empty());
  CHECK(chunks[2].documents.size() == 1);
  CHECK(chunks[1].period == Month{2009, 2});
}

TEST_CASE("single document gives a single chunk") {
  std::vector<Document> docs(1);
  docs[0].date = {2020, 6, 15};
  auto chunks = assign_chunks(docs);
  REQUIRE(chunks.size() == 1);
  CHECK(chunks[0].documents == std::vector<std::size_t>{0});
}

TEST_CASE("fifteen years of months give 180 chunks") {
  // independent count: 12 months in each of the years 2009..2023
  int expected = 0;
  for (int year = 2009; year <= 2023; ++year) expected += 12;
  std::vector<Document> docs(2);
  docs[0].date = {2009, 1, 1};
  docs[1].date = {2023, 12, 31};
  auto chunks = assign_chunks(docs);
  CHECK(chunks.size() == static_cast<std::size_t>(expected));
  CHECK(chunks.size() == 180);
  CHECK(chunks.back().period == Month{2023, 12});
  CHECK(months_between({2009, 1}, {2023, 12}) == 179);
}

TEST_CASE("chunk partition covers every document exactly once, periods tile") {
  std::vector<RawRecord> records;
  const char* dates[] = {"2010-05-03", "2010-01-20", "2010-03-09", "2010-05-30", "2010-01-01"};
  for (int i = 0; i < 5; ++i)
    records.push_back(testing::record("r" + std::to_string(i), dates[i], "market bank rates"));
  auto corpus = build_corpus(records, TokenizerRules::defaults(), 1);
  std::vector<int> seen(corpus.documents.size(), 0);
  for (std::size_t t = 0; t < corpus.chunks.size(); ++t) {
    CHECK(corpus.chunks[t].index == t);
    if (t > 0) CHECK(corpus.chunks[t].period == corpus.chunks[t - 1].period.next());
    for (auto d : corpus.chunks[t].documents) {
      ++seen[d];
      CHECK(Month::of(corpus.documents[d].date) == corpus.chunks[t].period);
    }
  }
  for (int s : seen) CHECK(s == 1);
  CHECK(corpus.chunks.size() == 5);
}

TEST_CASE("token ids round-trip to the in-vocabulary tokenizer output") {
  std::vector<RawRecord> records = {
      testing::record("a", "2011-01-02", "Rates rose; rates fell. Gold glittered."),
      testing::record("b", "2011-01-09", "Gold and rates, rates and gold."),
      testing::record("c", "2011-02-01", "Silver appeared once.")};
  const auto rules = TokenizerRules::defaults();
  CorpusStats stats;
  auto corpus = build_corpus(records, rules, 2, &stats);
  for (std::size_t d = 0; d < records.size(); ++d) {
    std::vector<std::string> expected;
    for (const auto& w : tokenize(records[d].text, rules))
      if (corpus.vocabulary.find(w)) expected.push_back(w);
    std::vector<std::string> got;
    for (auto id : corpus.documents[d].tokens) got.push_back(corpus.vocabulary.word(id));
    CHECK(got == expected);
  }
  CHECK(stats.tokens_dropped_oov > 0);
  CHECK(stats.tokens_kept == corpus.token_count());
}

TEST_CASE("duplicate ids are rejected") {
  std::vector<RawRecord> records = {testing::record("a", "2011-01-02", "market"),
                                    testing::record("a", "2011-01-03", "market")};
  CHECK_THROWS_AS(build_corpus(records, TokenizerRules::defaults(), 1), CorpusError);
}

TEST_CASE("corpus bundle serialization is deterministic and round-trips") {
  std::vector<RawRecord> records;
  for (int i = 0; i < 30; ++i)
    records.push_back(testing::record("doc" + std::to_string(i),
                                      "2012-0" + std::to_string(1 + i % 4) + "-1" +
                                          std::to_string(i % 10),
                                      "market bank rates inflation growth virus " +
                                          std::to_string(i)));
  auto a = build_corpus(records, TokenizerRules::defaults(), 1, nullptr, 1);
  auto b = build_corpus(records, TokenizerRules::defaults(), 1, nullptr, 4);
  testing::TempDir dir;
  save_corpus(a, dir / "a");
  save_corpus(b, dir / "b");
  for (auto f : {"vocab.tsv", "docs.jsonl", "chunks.json"})
    CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
  auto loaded = load_corpus(dir / "a");
  CHECK(loaded.vocabulary.words() == a.vocabulary.words());
  REQUIRE(loaded.documents.size() == a.documents.size());
  for (std::size_t d = 0; d < a.documents.size(); ++d) {
    CHECK(loaded.documents[d].tokens == a.documents[d].tokens);
    CHECK(loaded.documents[d].raw_text == a.documents[d].raw_text);
  }
  REQUIRE(loaded.chunks.size() == a.chunks.size());
  for (std::size_t t = 0; t < a.chunks.size(); ++t)
    CHECK(loaded.chunks[t].documents == a.chunks[t].documents);
}
