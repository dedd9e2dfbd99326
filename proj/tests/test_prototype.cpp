#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "json.hpp"
#include "narrshift/prototype.hpp"
#include "narrshift/rolling.hpp"
#include "support.hpp"

using namespace narrshift;

namespace {

TopicModel model_from(const std::vector<std::vector<std::uint32_t>>& topics) {
  const std::size_t V = topics.front().size(), K = topics.size();
  CountMatrix m(V, K);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t w = 0; w < V; ++w) m(w, k) = topics[k][w];
  return TopicModel(LdaConfig::with_topics(static_cast<std::uint32_t>(K)), m);
}

TopicModel random_model(Rng& rng, std::size_t K, std::size_t V) {
  std::vector<std::vector<std::uint32_t>> t(K, std::vector<std::uint32_t>(V, 0));
  for (auto& topic : t)
    for (auto& c : topic)
      if (rng.uniform() < 0.3) c = 1 + rng.below(20);
  return model_from(t);
}

TopicModel permuted(const TopicModel& m, const std::vector<std::size_t>& perm) {
  CountMatrix out(m.vocab_size(), m.topics());
  for (std::size_t w = 0; w < m.vocab_size(); ++w)
    for (std::size_t k = 0; k < m.topics(); ++k) out(w, k) = m.count(w, perm[k]);
  return TopicModel(m.config(), out);
}

TopicModel scaled(const TopicModel& m, std::uint32_t factor) {
  CountMatrix out(m.vocab_size(), m.topics());
  for (std::size_t w = 0; w < m.vocab_size(); ++w)
    for (std::size_t k = 0; k < m.topics(); ++k) out(w, k) = m.count(w, k) * factor;
  return TopicModel(m.config(), out);
}

// Full-vocabulary cosine written out directly.
double plain_cosine(const TopicModel& a, TopicId i, const TopicModel& b, TopicId j) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t w = 0; w < a.vocab_size(); ++w) {
    const double x = a.count(w, i), y = b.count(w, j);
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  return na == 0 || nb == 0 ? 0.0 : dot / std::sqrt(na * nb);
}

const SimilarityOptions kFull{0};

}  // namespace

TEST_CASE("topic cosine basics") {
  auto a = model_from({{1, 1, 0}, {0, 0, 4}});
  auto b = model_from({{1, 0, 1}, {3, 3, 0}});
  CHECK(topic_cosine(a, 0, a, 0, kFull) == doctest::Approx(1.0));
  CHECK(topic_cosine(a, 0, b, 0, kFull) == doctest::Approx(0.5));
  CHECK(topic_cosine(a, 0, b, 1, kFull) == doctest::Approx(1.0));
  CHECK(topic_cosine(a, 0, a, 1, kFull) == 0.0);
  auto other = model_from({{1, 1, 0, 0}});
  CHECK_THROWS_AS(topic_cosine(a, 0, other, 0), std::invalid_argument);
}

TEST_CASE("topic cosine restricts to the union of top-R words") {
  // top-1 of u is word 0, top-1 of v is word 1; word 2 is outside the union
  auto u = model_from({{5, 1, 4}});
  auto v = model_from({{1, 5, 4}});
  const double restricted = (5.0 * 1 + 1 * 5) / (std::sqrt(26.0) * std::sqrt(26.0));
  CHECK(topic_cosine(u, 0, v, 0, SimilarityOptions{1}) == doctest::Approx(restricted));
  CHECK(topic_cosine(u, 0, v, 0, kFull) == doctest::Approx(plain_cosine(u, 0, v, 0)));
}

TEST_CASE("a copy matches fully, disjoint vocabularies not at all") {
  auto a = model_from({{5, 1, 0, 0, 0, 0}, {0, 4, 4, 0, 0, 0}});
  CHECK(match_fraction(a, a, kFull) == 1.0);
  CHECK(model_similarity(a, a, kFull).value == 1.0);

  auto left = model_from({{3, 1, 0, 0}, {1, 3, 0, 0}});
  auto right = model_from({{0, 0, 3, 1}, {0, 0, 1, 3}});
  CHECK(match_fraction(left, right, kFull) == 0.0);
  CHECK(model_similarity(left, right, kFull).value == 0.0);
}

TEST_CASE("match fraction equals exhaustive enumeration on a toy fixture") {
  auto a = model_from({{6, 2, 1, 0, 0}, {0, 1, 5, 4, 0}});
  auto b = model_from({{0, 0, 4, 5, 1}, {5, 3, 0, 0, 2}});
  std::size_t matched = 0;
  for (TopicId i = 0; i < 2; ++i) {
    double cross = 0, within = 0;
    for (TopicId j = 0; j < 2; ++j) {
      cross = std::max(cross, plain_cosine(a, i, b, j));
      if (j != i) within = std::max(within, plain_cosine(a, i, a, j));
    }
    matched += cross > within;
  }
  CHECK(match_fraction(a, b, kFull) == doctest::Approx(matched / 2.0));
}

TEST_CASE("asymmetric fixture averages the two directions") {
  auto a = model_from({{1, 0, 0, 0}, {1, 1, 1, 1}});
  auto b = model_from({{1, 0, 0, 0}, {0, 1, 0, 0}});
  auto s = model_similarity(a, b, kFull);
  CHECK(s.fraction_a == 0.5);
  CHECK(s.fraction_b == 1.0);
  CHECK(s.value == 0.75);
  CHECK(s.matched_a == std::vector<bool>{true, false});
  CHECK(s.matched_b == std::vector<bool>{true, true});
}

TEST_CASE("similarity is symmetric, bounded and permutation invariant") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = random_model(rng, 5, 30);
    auto b = random_model(rng, 5, 30);
    const double ab = model_similarity(a, b).value;
    CHECK(ab == model_similarity(b, a).value);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
    CHECK(model_similarity(permuted(a, perm), b).value == ab);
    CHECK(model_similarity(a, permuted(b, perm)).value == ab);
  }
}

TEST_CASE("prototype of two replicas is index 0") {
  auto corpus = testing::make_corpus({"alpha", "bravo", "charlie", "delta"},
                                     {{0, 1, 0, 1}, {2, 3, 3, 2}, {0, 0, 1, 1}, {3, 2, 2, 3}});
  std::vector<std::size_t> all = {0, 1, 2, 3};
  auto config = LdaConfig::with_topics(2);
  config.sweeps = 20;
  config.seed = 10;
  auto run = select_prototype(make_slice(corpus, all), config, 2);
  CHECK(run.selection.chosen == 0);
  CHECK(run.selection.seeds == std::vector<std::uint64_t>{10, 11});
  CHECK(run.selection.similarity[0][1] == run.selection.similarity[1][0]);
  CHECK(run.selection.similarity[0][0] == 1.0);
  CHECK(run.chosen_state.word_topic == run.selection.replicas[0].word_topic());
}

TEST_CASE("prototype needs at least two replicas") {
  auto corpus = testing::make_corpus({"alpha"}, {{0}});
  std::vector<std::size_t> all = {0};
  CHECK_THROWS(select_prototype(make_slice(corpus, all), LdaConfig::with_topics(1), 1));
}

TEST_CASE("default replica count is ten") { CHECK(RollingConfig{}.replicas == 10); }

TEST_CASE("near-identical replicas beat shuffled noise") {
  auto r0 = model_from({{9, 5, 1, 0, 0, 0}, {0, 0, 0, 8, 6, 1}, {1, 0, 7, 0, 1, 6}});
  auto r1 = model_from({{8, 5, 2, 0, 0, 0}, {0, 0, 1, 8, 5, 1}, {1, 0, 7, 0, 1, 5}});
  auto r2 = model_from({{1, 1, 1, 1, 1, 1}, {2, 1, 2, 1, 2, 1}, {1, 2, 1, 2, 1, 2}});
  auto sel = select_among({r0, r1, r2}, kFull);
  CHECK(sel.chosen <= 1);
  CHECK(sel.mean_similarity(sel.chosen) >= sel.mean_similarity(2));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(sel.similarity[i][j] == sel.similarity[j][i]);
}

TEST_CASE("prototype report lists the matrix, seeds and match flags") {
  auto r0 = model_from({{9, 5, 1}, {0, 1, 8}});
  auto r1 = model_from({{8, 5, 2}, {1, 0, 8}});
  auto sel = select_among({r0, r1}, kFull);
  sel.seeds = {3, 4};
  auto j = nlohmann::json::parse(prototype_report_json(sel));
  CHECK(j["chosen"] == 0);
  CHECK(j["seeds"] == nlohmann::json::array({3, 4}));
  CHECK(j["similarity"].size() == 2);
  REQUIRE(j["match_flags"].size() == 1);
  CHECK(j["match_flags"][0]["matched_a"].size() == 2);
}

TEST_CASE("scaling or relabeling one replica keeps the chosen index") {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<TopicModel> models;
    for (int r = 0; r < 4; ++r) models.push_back(random_model(rng, 4, 25));
    const auto base = select_among(models).chosen;
    auto s = models;
    s[trial % 4] = scaled(s[trial % 4], 3);
    CHECK(select_among(s).chosen == base);
    auto p = models;
    p[(trial + 1) % 4] = permuted(p[(trial + 1) % 4], {2, 3, 1, 0});
    CHECK(select_among(p).chosen == base);
  }
}
