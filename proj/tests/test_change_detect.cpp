#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "narrshift/change_detect.hpp"
#include "narrshift/synthetic.hpp"
#include "support.hpp"

using namespace narrshift;

namespace {

using Dense = std::vector<std::vector<std::uint32_t>>;  // [topic][word]

ChunkTopicSnapshot snapshot(std::size_t chunk, const Dense& topics) {
  ChunkTopicSnapshot s;
  s.chunk = chunk;
  for (const auto& row : topics) {
    std::vector<ChunkTopicSnapshot::Cell> cells;
    std::uint64_t total = 0;
    for (std::size_t w = 0; w < row.size(); ++w)
      if (row[w] > 0) {
        cells.push_back({static_cast<WordId>(w), row[w]});
        total += row[w];
      }
    s.topics.push_back(std::move(cells));
    s.totals.push_back(total);
  }
  return s;
}

// chunks [0, n) repeat `before`, [shift, n) repeat `after`
std::vector<ChunkTopicSnapshot> sequence(std::size_t n, std::size_t shift, const Dense& before,
                                         const Dense& after) {
  std::vector<ChunkTopicSnapshot> out;
  for (std::size_t t = 0; t < n; ++t) out.push_back(snapshot(t, t < shift ? before : after));
  return out;
}

double brute_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return na == 0 || nb == 0 ? 0.0 : dot / std::sqrt(na * nb);
}

// Exact lower quantile of cos((c, n - c), (1, 1)) for c ~ Binomial(n, 1/2).
double exact_uniform_quantile(int n, double alpha) {
  std::vector<std::pair<double, double>> outcomes;  // (similarity, probability)
  for (int c = 0; c <= n; ++c) {
    const double p = std::exp(std::lgamma(n + 1.0) - std::lgamma(c + 1.0) -
                              std::lgamma(n - c + 1.0) - n * std::log(2.0));
    outcomes.push_back({brute_cosine({double(c), double(n - c)}, {1.0, 1.0}), p});
  }
  std::sort(outcomes.begin(), outcomes.end());
  double acc = 0;
  for (const auto& [s, p] : outcomes) {
    acc += p;
    if (acc >= alpha) return s;
  }
  return outcomes.back().first;
}

const Dense kMarket = {{40, 30, 20, 10, 0, 0, 0, 0}, {0, 0, 0, 0, 40, 30, 20, 10}};

}  // namespace

TEST_CASE("cosine similarity examples") {
  const std::vector<double> e1 = {1, 0}, e2 = {0, 1}, ones = {1, 1}, zero = {0, 0};
  CHECK(cosine_similarity(e1, e1) == doctest::Approx(1.0));
  CHECK(cosine_similarity(e1, e2) == 0.0);
  CHECK(cosine_similarity(ones, e1) == doctest::Approx(0.70710678));
  CHECK(cosine_similarity(zero, e1) == 0.0);
  const std::vector<double> three = {1, 0, 0};
  CHECK_THROWS_AS(cosine_similarity(e1, three), std::invalid_argument);
}

TEST_CASE("look-back windows") {
  auto w = lookback_window(20, 4, std::nullopt);
  CHECK(w.first == 16);
  CHECK(w.last == 20);

  w = lookback_window(20, 4, 18);
  CHECK(w.first == 19);
  CHECK(w.last == 20);

  CHECK(lookback_window(20, 4, 19).empty());
  // the floor can start the window at the first monitored chunk
  CHECK(lookback_window(12, 4, std::nullopt, 12).empty());
  w = lookback_window(13, 4, std::nullopt, 12);
  CHECK(w.first == 12);
  // near the start the window is clipped at chunk 0
  w = lookback_window(2, 4, std::nullopt);
  CHECK(w.first == 0);
  CHECK(w.last == 2);
}

TEST_CASE("look-back vector sums the window") {
  std::vector<ChunkTopicSnapshot> snaps;
  for (std::uint32_t t = 0; t < 6; ++t) snaps.push_back(snapshot(t, {{t, 1, 0}}));
  auto v = lookback_vector(snaps, 0, 5, 3, std::nullopt, 3);
  REQUIRE(v);
  CHECK(*v == std::vector<double>{2 + 3 + 4, 3, 0});
  CHECK_FALSE(lookback_vector(snaps, 0, 5, 3, 4, 3));
}

TEST_CASE("mixing") {
  const std::vector<double> lb = {8, 0}, cur = {0, 4};
  auto m = mix(lb, cur, 0.95);
  REQUIRE(m);
  CHECK((*m)[0] == doctest::Approx(7.6));
  CHECK((*m)[1] == doctest::Approx(0.4));

  auto only_lb = mix(std::vector<double>{2, 6}, cur, 1.0);
  CHECK(*only_lb == std::vector<double>{2, 6});
  auto only_cur = mix(std::vector<double>{2, 6}, std::vector<double>{3, 1}, 0.0);
  CHECK((*only_cur)[0] == doctest::Approx(6.0));
  CHECK((*only_cur)[1] == doctest::Approx(2.0));

  const std::vector<double> zero = {0, 0};
  CHECK_FALSE(mix(zero, zero, 0.5));
  CHECK_THROWS_AS(mix(zero, std::vector<double>{1}, 0.5), std::invalid_argument);
}

TEST_CASE("a point mass gives threshold one") {
  Rng rng(1);
  const std::vector<double> mixed = {0, 12, 0};
  auto t = bootstrap_threshold(mixed, 50, 500, 0.01, rng);
  REQUIRE(t);
  CHECK(*t == doctest::Approx(1.0));
  CHECK_FALSE(bootstrap_threshold(mixed, 0, 500, 0.01, rng));
  CHECK_FALSE(bootstrap_threshold(std::vector<double>{0, 0}, 10, 500, 0.01, rng));
}

TEST_CASE("quantile rule takes element ceil(alpha B)") {
  std::vector<double> sorted(500);
  for (std::size_t i = 0; i < 500; ++i) sorted[i] = static_cast<double>(i + 1);
  CHECK(lower_quantile(sorted, 0.01) == 5.0);
  CHECK(lower_quantile(sorted, 0.05) == 25.0);
  CHECK(lower_quantile(sorted, 0.0001) == 1.0);
  CHECK(lower_quantile(std::vector<double>{3, 4, 9}, 0.5) == 4.0);
  CHECK_THROWS(lower_quantile(std::vector<double>{}, 0.5));
}

TEST_CASE("bootstrap similarities follow the exact binomial law") {
  // Two equally likely words, n = 10: P(sim <= s) is a binomial sum.
  Rng rng(77);
  const std::vector<double> mixed = {3, 3};
  const auto sims = bootstrap_similarities(mixed, 10, 40000, rng);
  double cdf = 0;
  for (int c = 0; c <= 5; ++c) {
    const double p = std::exp(std::lgamma(11.0) - std::lgamma(c + 1.0) -
                              std::lgamma(11.0 - c) - 10 * std::log(2.0));
    cdf += c == 5 ? p : 2 * p;  // c and 10 - c share a similarity
    const double s = brute_cosine({double(c), double(10 - c)}, {1.0, 1.0});
    const auto below =
        std::upper_bound(sims.begin(), sims.end(), s + 1e-12) - sims.begin();
    CHECK(std::abs(static_cast<double>(below) / 40000.0 - cdf) <= 0.01);
  }
}

TEST_CASE("threshold matches exact enumeration on two uniform words") {
  const double exact = exact_uniform_quantile(10, 0.01);
  CHECK(exact == doctest::Approx(10.0 / (std::sqrt(2.0) * std::sqrt(82.0))));
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    auto t = bootstrap_threshold(std::vector<double>{1, 1}, 10, 500, 0.01, rng);
    REQUIRE(t);
    CHECK(std::abs(*t - exact) <= 0.005);
  }
}

TEST_CASE("threshold is monotone in alpha on the same draw") {
  Rng rng(5);
  const std::vector<double> mixed = {5, 3, 2, 1, 1};
  const auto sims = bootstrap_similarities(mixed, 40, 500, rng);
  double previous = -1;
  for (double a : {0.002, 0.01, 0.02, 0.05, 0.1, 0.5}) {
    const double t = lower_quantile(sims, a);
    CHECK(t >= previous);
    previous = t;
  }
}

TEST_CASE("leave-one-out impacts on the three-word example") {
  const std::vector<double> u = {10, 0, 5}, v = {0, 10, 5};
  auto impacts = loo_impacts(u, v, 5);
  REQUIRE(impacts.size() == 3);
  const double base = 1 - brute_cosine({10, 0, 5}, {0, 10, 5});
  CHECK(base == doctest::Approx(0.8));
  // a and b tie; c makes the vectors orthogonal when removed
  CHECK(impacts[0].word == 0);
  CHECK(impacts[1].word == 1);
  CHECK(impacts[2].word == 2);
  CHECK(impacts[0].impact == doctest::Approx(base - (1 - brute_cosine({0, 5}, {10, 5}))));
  CHECK(impacts[0].impact > 0);
  CHECK(impacts[2].impact == doctest::Approx(0.8 - 1.0));
  CHECK(loo_impacts(u, v, 1).size() == 1);
}

TEST_CASE("identical vectors have zero impact everywhere") {
  const std::vector<double> u = {4, 1, 0, 7};
  for (const auto& w : loo_impacts(u, u, 10)) CHECK(w.impact == doctest::Approx(0.0));
}

TEST_CASE("leave-one-out impacts equal brute-force deletion") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t V = 20 + rng.below(60);
    std::vector<double> a(V), b(V);
    for (std::size_t i = 0; i < V; ++i) {
      a[i] = rng.uniform() < 0.5 ? rng.below(30) : 0;
      b[i] = rng.uniform() < 0.5 ? rng.below(30) : 0;
    }
    const double base = 1 - brute_cosine(a, b);
    std::vector<WordImpact> expected;
    for (std::size_t w = 0; w < V; ++w) {
      if (a[w] == 0 && b[w] == 0) continue;
      auto a2 = a, b2 = b;
      a2.erase(a2.begin() + static_cast<std::ptrdiff_t>(w));
      b2.erase(b2.begin() + static_cast<std::ptrdiff_t>(w));
      expected.push_back({static_cast<WordId>(w), base - (1 - brute_cosine(a2, b2))});
    }
    std::stable_sort(expected.begin(), expected.end(),
                     [](const auto& x, const auto& y) { return x.impact > y.impact; });
    const auto got = loo_impacts(a, b, expected.size());
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].word == expected[i].word);
      CHECK(got[i].impact == doctest::Approx(expected[i].impact).epsilon(1e-12));
    }
  }
}

TEST_CASE("a stable topic never fires") {
  auto snaps = sequence(20, 20, kMarket, kMarket);
  auto result = monitor(snaps, 8, 12, DetectorConfig{});
  CHECK(result.events.empty());
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t t = 12; t < 20; ++t) {
      const auto& cell = result.series.cells[k][t];
      CHECK(cell.tested);
      CHECK(cell.similarity == doctest::Approx(1.0));
      CHECK(cell.threshold <= 1.0 + 1e-12);
    }
}

TEST_CASE("a replaced topic fires once and the window resets") {
  const Dense before = {{40, 30, 20, 10, 0, 0, 0, 0}, {0, 0, 0, 0, 40, 30, 20, 10}};
  const Dense after = {{0, 0, 20, 10, 40, 30, 0, 0}, {0, 0, 0, 0, 40, 30, 20, 10}};
  auto snaps = sequence(20, 15, before, after);
  auto result = monitor(snaps, 8, 12, DetectorConfig{});
  REQUIRE(result.events.size() == 1);
  const auto& e = result.events[0];
  CHECK(e.topic == 0);
  CHECK(e.chunk == 15);
  CHECK(e.similarity < e.threshold);
  CHECK(e.impacts.size() == 5);
  for (std::size_t i = 1; i < e.impacts.size(); ++i)
    CHECK(e.impacts[i - 1].impact >= e.impacts[i].impact);

  const auto& row = result.series.cells[0];
  CHECK(row[15].change);
  CHECK_FALSE(row[16].tested);  // window [16, 16) is empty
  CHECK(std::isnan(row[16].similarity));
  CHECK(row[17].tested);  // window is exactly chunk 16
  CHECK_FALSE(row[17].change);
  CHECK(result.series.last_change[0] == 15u);
  CHECK_FALSE(result.series.last_change[1].has_value());
}

TEST_CASE("after a change the window restarts at the following chunk") {
  const Dense before = {{40, 30, 20, 10, 0, 0}};
  const Dense after = {{0, 0, 0, 10, 50, 40}};
  auto snaps = sequence(20, 14, before, after);
  ChangeDetector detector(DetectorConfig{}, 1, 6, 12, 20);
  for (std::size_t t = 12; t <= 16; ++t) detector.detect(snaps, 0, t);
  REQUIRE(detector.series().last_change[0] == 14u);
  CHECK(lookback_window(15, 4, 14).empty());
  auto w = lookback_window(16, 4, 14);
  CHECK(w.first == 15);
  CHECK(w.last == 16);
  CHECK_FALSE(detector.series().cells[0][15].tested);
  CHECK(detector.series().cells[0][16].tested);
}

TEST_CASE("chunks with too few tokens are recorded but not tested") {
  auto snaps = sequence(16, 14, {{40, 30, 20, 10}}, {{0, 0, 30, 60}});
  DetectorConfig c;
  c.min_tokens = 100;
  auto result = monitor(snaps, 4, 12, c);
  const auto& cell = result.series.cells[0][14];
  CHECK(cell.n_current == 90);
  CHECK_FALSE(cell.tested);
  CHECK_FALSE(cell.change);
  CHECK_FALSE(std::isnan(cell.similarity));
  CHECK(std::isnan(cell.threshold));
  c.min_tokens = 90;
  CHECK(monitor(snaps, 4, 12, c).events.size() == 1);
}

TEST_CASE("scaling counts keeps similarity and decisions") {
  const Dense before = {{40, 30, 20, 10, 0, 0, 0, 0}, {0, 0, 0, 0, 40, 30, 20, 10}};
  const Dense after = {{0, 0, 20, 10, 40, 30, 0, 0}, {0, 0, 0, 0, 40, 30, 20, 10}};
  auto base = monitor(sequence(22, 16, before, after), 8, 12, DetectorConfig{});
  for (std::uint32_t factor : {2u, 5u}) {
    Dense b = before, a = after;
    for (auto* d : {&b, &a})
      for (auto& row : *d)
        for (auto& x : row) x *= factor;
    auto scaled = monitor(sequence(22, 16, b, a), 8, 12, DetectorConfig{});
    REQUIRE(scaled.events.size() == base.events.size());
    for (std::size_t i = 0; i < base.events.size(); ++i) {
      CHECK(scaled.events[i].chunk == base.events[i].chunk);
      CHECK(scaled.events[i].topic == base.events[i].topic);
      CHECK(scaled.events[i].similarity == doctest::Approx(base.events[i].similarity));
      for (std::size_t j = 0; j < base.events[i].impacts.size(); ++j)
        CHECK(scaled.events[i].impacts[j].word == base.events[i].impacts[j].word);
    }
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t t = 12; t < 22; ++t) {
        const auto& x = base.series.cells[k][t];
        const auto& y = scaled.series.cells[k][t];
        CHECK(x.tested == y.tested);
        CHECK(x.change == y.change);
        if (!std::isnan(x.similarity)) CHECK(y.similarity == doctest::Approx(x.similarity));
      }
  }
}

TEST_CASE("thresholds do not depend on thread count or topic order") {
  auto snaps = stationary_snapshots(6, 20, 40, 300, 1.1, 9);
  DetectorConfig c;
  c.seed = 1234;
  auto one = monitor(snaps, 40, 12, c, 1);
  auto four = monitor(snaps, 40, 12, c, 4);
  for (std::size_t k = 0; k < 6; ++k)
    for (std::size_t t = 12; t < 20; ++t) {
      CHECK(one.series.cells[k][t].threshold == four.series.cells[k][t].threshold);
      CHECK(one.series.cells[k][t].change == four.series.cells[k][t].change);
    }
  // a detector that only ever sees topic 5 reproduces the same cells
  ChangeDetector solo(c, 6, 40, 12, 20);
  for (std::size_t t = 12; t < 20; ++t) {
    solo.detect(snaps, 5, t);
    CHECK(solo.series().cells[5][t].threshold == one.series.cells[5][t].threshold);
  }
}

TEST_CASE("detector rejects unmonitored chunks and bad configs") {
  auto snaps = sequence(14, 14, kMarket, kMarket);
  ChangeDetector d(DetectorConfig{}, 2, 8, 12, 14);
  CHECK_THROWS_AS(d.detect(snaps, 0, 11), std::out_of_range);
  CHECK_THROWS_AS(d.detect(snaps, 2, 12), std::out_of_range);
  DetectorConfig bad;
  bad.alpha = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = DetectorConfig{};
  bad.mixture = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  DetectorConfig defaults;
  CHECK(defaults.lookback == 4);
  CHECK(defaults.mixture == 0.95);
  CHECK(defaults.alpha == 0.01);
  CHECK(defaults.bootstrap == 500);
  CHECK(defaults.impact_top_n == 5);
}

TEST_CASE("monitor.csv and changes.json round-trip") {
  const Dense before = {{40, 30, 20, 10, 0, 0, 0, 0}, {0, 0, 0, 0, 40, 30, 20, 10}};
  const Dense after = {{0, 0, 20, 10, 40, 30, 0, 0}, {0, 0, 0, 0, 40, 30, 20, 10}};
  auto snaps = sequence(20, 15, before, after);
  auto result = monitor(snaps, 8, 12, DetectorConfig{});
  std::vector<TimeChunk> chunks(20);
  Month m{2014, 1};
  for (std::size_t t = 0; t < 20; ++t, m = m.next()) {
    chunks[t].index = t;
    chunks[t].period = m;
  }
  const auto csv = monitor_csv(result.series, chunks);
  CHECK(csv.rfind("topic_id,chunk_index,period,n_current,similarity,threshold,tested,change\n",
                  0) == 0);
  CHECK(csv.find("0,15,2015-04,") != std::string::npos);
  auto parsed = parse_monitor_csv(csv);
  CHECK(parsed.first_monitored == 12);
  CHECK(parsed.chunks == 20);
  CHECK(parsed.last_change == result.series.last_change);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t t = 12; t < 20; ++t) {
      const auto& x = result.series.cells[k][t];
      const auto& y = parsed.cells[k][t];
      CHECK(x.tested == y.tested);
      CHECK(x.change == y.change);
      CHECK(x.n_current == y.n_current);
      CHECK(std::isnan(x.similarity) == std::isnan(y.similarity));
      if (!std::isnan(x.similarity)) CHECK(y.similarity == doctest::Approx(x.similarity).epsilon(1e-9));
    }
  CHECK(monitor_csv(parsed, chunks) == csv);

  Vocabulary vocab({"a", "b", "c", "d", "e", "f", "g", "h"}, std::vector<std::uint64_t>(8, 1));
  const auto text = changes_json(result.events, vocab, chunks);
  auto events = parse_changes_json(text, vocab);
  REQUIRE(events.size() == result.events.size());
  CHECK(events[0].topic == result.events[0].topic);
  CHECK(events[0].chunk == result.events[0].chunk);
  CHECK(events[0].similarity == result.events[0].similarity);
  CHECK(events[0].impacts == result.events[0].impacts);
  CHECK(changes_json(events, vocab, chunks) == text);
}
