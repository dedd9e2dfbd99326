#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "narrshift/change_detect.hpp"
#include "narrshift/rolling.hpp"
#include "narrshift/synthetic.hpp"
#include "support.hpp"

using namespace narrshift;

namespace {

RollingConfig small_config(std::uint64_t seed, std::uint32_t warmup = 12) {
  RollingConfig c;
  c.lda = LdaConfig::with_topics(2);
  c.lda.seed = seed;
  c.lda.sweeps = 100;
  c.replicas = 3;
  c.warmup = warmup;
  c.chunk_sweeps = 30;
  return c;
}

ChunkedCorpus planted(std::uint64_t seed, std::size_t chunks = 40, std::size_t docs = 10) {
  PlantedShiftOptions o;
  o.seed = seed;
  o.chunks = chunks;
  o.docs_per_chunk = docs;
  return build_corpus(planted_shift_corpus(o).records, TokenizerRules::defaults(), 1);
}

std::size_t topic_holding(const ChunkTopicSnapshot& s, WordId w) {
  std::uint32_t best = 0;
  std::size_t arg = 0;
  for (std::size_t k = 0; k < s.topics.size(); ++k)
    for (const auto& [word, n] : s.topics[k])
      if (word == w && n > best) {
        best = n;
        arg = k;
      }
  return arg;
}

}  // namespace

TEST_CASE("config validation") {
  auto c = small_config(1);
  CHECK_NOTHROW(c.validate(12));
  CHECK_THROWS_AS(c.validate(11), ConfigError);
  c.memory = 0;
  CHECK_THROWS_AS(c.validate(20), ConfigError);
  RollingConfig defaults;
  CHECK(defaults.warmup == 12);
  CHECK(defaults.memory == 4);
  CHECK(defaults.lda.topics == 50);
}

TEST_CASE("14 chunks with w = 12 give 12 warm-up and 2 rolled snapshots") {
  auto corpus = planted(3, 14);
  auto state = run_rolling(corpus, small_config(3));
  REQUIRE(state.snapshots.size() == 14);
  for (std::size_t t = 0; t < 14; ++t) {
    CHECK(state.snapshots[t].chunk == t);
    CHECK(state.snapshots[t].token_count() == corpus.chunk_token_count(t));
  }
}

TEST_CASE("warm-up over every chunk leaves nothing to monitor") {
  auto corpus = planted(4, 12);
  auto state = run_rolling(corpus, small_config(4));
  CHECK(state.snapshots.size() == 12);
  auto result = monitor(state.snapshots, corpus.vocabulary.size(), 12, DetectorConfig{});
  CHECK(result.events.empty());
  for (const auto& row : result.series.cells)
    for (const auto& cell : row) CHECK_FALSE(cell.tested);
}

TEST_CASE("warm-up snapshots partition the warm-up tokens") {
  auto corpus = planted(5, 16);
  auto state = fit_warmup(corpus, small_config(5));
  REQUIRE(state.snapshots.size() == 12);
  std::uint64_t total = 0, expected = 0;
  for (std::size_t t = 0; t < 12; ++t) {
    total += state.snapshots[t].token_count();
    expected += corpus.chunk_token_count(t);
  }
  CHECK(total == expected);
}

TEST_CASE("empty warm-up is rejected") {
  auto corpus = testing::make_corpus({"alpha"}, {{}});
  CHECK_THROWS(fit_warmup(corpus, small_config(1, 1)));
}

TEST_CASE("empty chunk yields an empty snapshot and the state advances") {
  std::vector<RawRecord> records;
  for (int m = 1; m <= 12; ++m)
    for (int d = 0; d < 3; ++d)
      records.push_back(testing::record("m" + std::to_string(m) + "d" + std::to_string(d),
                                        "2010-" + std::string(m < 10 ? "0" : "") +
                                            std::to_string(m) + "-0" + std::to_string(d + 1),
                                        d % 2 ? "market bank rates bonds" : "coach league season fans"));
  records.push_back(testing::record("late", "2011-02-03", "market bank season coach"));
  auto corpus = build_corpus(records, TokenizerRules::defaults(), 1);
  REQUIRE(corpus.chunks.size() == 14);
  REQUIRE(corpus.chunks[12].documents.empty());
  auto state = fit_warmup(corpus, small_config(2));
  const auto& empty = roll(state, corpus, 12);
  CHECK(empty.token_count() == 0);
  CHECK(state.next_chunk() == 13);
  roll(state, corpus, 13);
  CHECK(state.snapshots[13].token_count() == corpus.chunk_token_count(13));
}

TEST_CASE("rolling out of order is an error") {
  auto corpus = planted(6, 16);
  auto state = fit_warmup(corpus, small_config(6));
  CHECK_THROWS_AS(roll(state, corpus, 13), std::logic_error);
  roll(state, corpus, 12);
  CHECK_THROWS_AS(roll(state, corpus, 12), std::logic_error);
}

TEST_CASE("memory at t is the sum of snapshots t-4 .. t-1") {
  auto corpus = planted(7, 20);
  auto config = small_config(7);
  config.memory = 4;
  auto state = run_rolling(corpus, config);
  const auto V = corpus.vocabulary.size();
  for (std::size_t t : {12u, 15u, 19u}) {
    auto [counts, totals] = memory_counts(state, t, V);
    for (TopicId k = 0; k < 2; ++k) {
      std::vector<double> expected(V, 0.0);
      for (std::size_t s = t - 4; s < t; ++s) state.snapshots[s].accumulate(k, expected);
      double total = 0;
      for (WordId w = 0; w < V; ++w) {
        CHECK(counts(w, k) == expected[w]);
        total += expected[w];
      }
      CHECK(totals[k] == total);
    }
  }
}

TEST_CASE("only the memory window influences a rolled chunk") {
  auto corpus = planted(8, 20);
  auto config = small_config(8);
  auto reference = run_rolling(corpus, config);
  const std::size_t t = 18;

  std::vector<ChunkTopicSnapshot> altered(reference.snapshots.begin(),
                                          reference.snapshots.begin() + t);
  // chunks before t - m get arbitrary (but shape-valid) contents
  for (std::size_t s = 0; s < t - config.memory; ++s) {
    altered[s].topics.assign(2, {});
    altered[s].topics[s % 2] = {{0, 7}, {3, 2}};
    altered[s].totals = {s % 2 ? 0u : 9u, s % 2 ? 9u : 0u};
  }
  auto state = resume_rolling(corpus, config, altered, reference.doc_topics);
  const auto& again = roll(state, corpus, t);
  CHECK(again == reference.snapshots[t]);
}

TEST_CASE("runs are deterministic and resumable") {
  auto corpus = planted(9, 18);
  auto config = small_config(9);
  auto a = run_rolling(corpus, config);
  auto b = run_rolling(corpus, config);
  CHECK(a.snapshots == b.snapshots);
  CHECK(a.doc_topics == b.doc_topics);

  auto warm = fit_warmup(corpus, config);
  testing::TempDir dir;
  save_snapshots(warm.snapshots, corpus, dir / "snaps");
  save_doc_topics(warm, corpus, dir / "doc_topics.jsonl");
  auto resumed = resume_rolling(corpus, config, load_snapshots(dir / "snaps"),
                                load_doc_topics(corpus, dir / "doc_topics.jsonl"));
  for (std::size_t t = resumed.next_chunk(); t < corpus.chunks.size(); ++t)
    roll(resumed, corpus, t);
  CHECK(resumed.snapshots == a.snapshots);
}

TEST_CASE("snapshot store round-trips with an index manifest") {
  auto corpus = planted(10, 14);
  auto state = run_rolling(corpus, small_config(10));
  testing::TempDir dir;
  save_snapshots(state.snapshots, corpus, dir / "snaps");
  CHECK(std::filesystem::exists(dir / "snaps" / "t=0.json"));
  CHECK(std::filesystem::exists(dir / "snaps" / "t=13.json"));
  CHECK(std::filesystem::exists(dir / "snaps" / "index.json"));
  CHECK(load_snapshots(dir / "snaps") == state.snapshots);
}

TEST_CASE("a repeated chunk keeps consecutive snapshots close") {
  std::vector<double> cosines;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    PlantedShiftOptions o;
    o.seed = seed;
    o.chunks = 13;
    o.docs_per_chunk = 10;
    auto records = planted_shift_corpus(o).records;
    // chunk 13 repeats chunk 12 word for word
    std::vector<RawRecord> extra;
    Month final_month = Month::of(records.front().date);
    for (const auto& r : records) final_month = std::max(final_month, Month::of(r.date));
    for (const auto& r : records) {
      if (Month::of(r.date) != final_month) continue;
      auto copy = r;
      copy.id += "-again";
      copy.date = final_month.next().first_day();
      copy.date.day = std::min(r.date.day, 28);
      extra.push_back(copy);
    }
    records.insert(records.end(), extra.begin(), extra.end());
    auto corpus = build_corpus(records, TokenizerRules::defaults(), 1);
    REQUIRE(corpus.chunks.size() == 14);
    auto state = run_rolling(corpus, small_config(seed));
    const auto V = corpus.vocabulary.size();
    double worst = 1.0;
    for (TopicId k = 0; k < 2; ++k)
      worst = std::min(worst, cosine_similarity(state.snapshots[12].dense(k, V),
                                                state.snapshots[13].dense(k, V)));
    cosines.push_back(worst);
  }
  std::nth_element(cosines.begin(), cosines.begin() + 10, cosines.end());
  CHECK(cosines[10] >= 0.9);
}

TEST_CASE("a planted vocabulary shift shows as a cosine dip") {
  auto corpus = planted(11, 30);
  auto state = run_rolling(corpus, small_config(11));
  const auto V = corpus.vocabulary.size();
  const auto k = static_cast<TopicId>(topic_holding(state.snapshots[5], *corpus.vocabulary.find("market")));
  std::vector<double> baseline;
  for (std::size_t t = 13; t < 30; ++t)
    if (t != 20)
      baseline.push_back(cosine_similarity(state.snapshots[t - 1].dense(k, V),
                                           state.snapshots[t].dense(k, V)));
  std::sort(baseline.begin(), baseline.end());
  const double median = baseline[baseline.size() / 2];
  const double at_shift =
      cosine_similarity(state.snapshots[19].dense(k, V), state.snapshots[20].dense(k, V));
  CHECK(median - at_shift >= 0.15);
}
