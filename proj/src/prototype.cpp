#include "narrshift/prototype.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "narrshift/util.hpp"

namespace narrshift {

namespace {

// Top-R support of one topic, sorted by word id.
std::vector<WordId> support_of(const TopicModel& m, TopicId k, std::size_t top_r) {
  std::vector<WordId> ids = m.top_words(k, top_r == 0 ? m.vocab_size() : top_r);
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct TopicSupports {
  std::vector<std::vector<WordId>> topics;

  TopicSupports(const TopicModel& m, std::size_t top_r) {
    topics.reserve(m.topics());
    for (TopicId k = 0; k < m.topics(); ++k) topics.push_back(support_of(m, k, top_r));
  }
};

double cosine_on_union(const TopicModel& a, TopicId i, const std::vector<WordId>& sa,
                       const TopicModel& b, TopicId j, const std::vector<WordId>& sb) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  auto visit = [&](WordId w) {
    const double x = a.count(w, i), y = b.count(w, j);
    dot += x * y;
    na += x * x;
    nb += y * y;
  };
  std::size_t p = 0, q = 0;
  while (p < sa.size() || q < sb.size()) {
    if (q == sb.size() || (p < sa.size() && sa[p] < sb[q])) {
      visit(sa[p++]);
    } else if (p == sa.size() || sb[q] < sa[p]) {
      visit(sb[q++]);
    } else {
      visit(sa[p]);
      ++p;
      ++q;
    }
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

void require_compatible(const TopicModel& a, const TopicModel& b) {
  if (a.vocab_size() != b.vocab_size())
    throw std::invalid_argument("models are over different vocabularies (" +
                                std::to_string(a.vocab_size()) + " vs " +
                                std::to_string(b.vocab_size()) + " words)");
}

std::vector<bool> matched_with_supports(const TopicModel& a, const TopicSupports& sa,
                                        const TopicModel& b, const TopicSupports& sb) {
  std::vector<bool> matched(a.topics(), false);
  for (TopicId i = 0; i < a.topics(); ++i) {
    double cross = 0.0, within = 0.0;
    for (TopicId j = 0; j < b.topics(); ++j)
      cross = std::max(cross, cosine_on_union(a, i, sa.topics[i], b, j, sb.topics[j]));
    for (TopicId j = 0; j < a.topics(); ++j)
      if (j != i)
        within = std::max(within, cosine_on_union(a, i, sa.topics[i], a, j, sa.topics[j]));
    matched[i] = cross > within;
  }
  return matched;
}

double fraction(const std::vector<bool>& flags) {
  if (flags.empty()) return 0.0;
  return static_cast<double>(std::count(flags.begin(), flags.end(), true)) /
         static_cast<double>(flags.size());
}

ModelPairSimilarity similarity_with_supports(const TopicModel& a, const TopicSupports& sa,
                                             const TopicModel& b, const TopicSupports& sb) {
  if (a.topics() != b.topics())
    throw std::invalid_argument("models have different topic counts");
  ModelPairSimilarity s;
  s.matched_a = matched_with_supports(a, sa, b, sb);
  s.matched_b = matched_with_supports(b, sb, a, sa);
  s.fraction_a = fraction(s.matched_a);
  s.fraction_b = fraction(s.matched_b);
  s.value = (s.fraction_a + s.fraction_b) / 2.0;
  return s;
}

}  // namespace

double topic_cosine(const TopicModel& a, TopicId i, const TopicModel& b, TopicId j,
                    const SimilarityOptions& options) {
  require_compatible(a, b);
  return cosine_on_union(a, i, support_of(a, i, options.top_r), b, j,
                         support_of(b, j, options.top_r));
}

std::vector<bool> matched_topics(const TopicModel& a, const TopicModel& b,
                                 const SimilarityOptions& options) {
  require_compatible(a, b);
  return matched_with_supports(a, TopicSupports(a, options.top_r), b,
                               TopicSupports(b, options.top_r));
}

double match_fraction(const TopicModel& a, const TopicModel& b,
                      const SimilarityOptions& options) {
  return fraction(matched_topics(a, b, options));
}

ModelPairSimilarity model_similarity(const TopicModel& a, const TopicModel& b,
                                     const SimilarityOptions& options) {
  require_compatible(a, b);
  return similarity_with_supports(a, TopicSupports(a, options.top_r), b,
                                  TopicSupports(b, options.top_r));
}

double PrototypeSelection::mean_similarity(std::size_t i) const {
  const std::size_t n = similarity.size();
  if (n < 2) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) sum += similarity[i][j];
  return sum / static_cast<double>(n - 1);
}

PrototypeSelection select_among(std::vector<TopicModel> models,
                                const SimilarityOptions& options, unsigned threads) {
  const std::size_t n = models.size();
  if (n < 2) throw std::invalid_argument("prototype selection needs at least 2 replicas");
  for (const auto& m : models) require_compatible(models.front(), m);

  std::vector<TopicSupports> supports;
  supports.reserve(n);
  for (const auto& m : models) supports.emplace_back(m, options.top_r);

  std::vector<std::pair<std::size_t, std::size_t>> work;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) work.emplace_back(i, j);

  PrototypeSelection sel;
  sel.pairs.assign(n, std::vector<ModelPairSimilarity>(n));
  parallel_for(work.size(), threads, [&](std::size_t p) {
    const auto [i, j] = work[p];
    sel.pairs[i][j] = similarity_with_supports(models[i], supports[i], models[j], supports[j]);
  });
  sel.similarity.assign(n, std::vector<double>(n, 1.0));
  for (auto [i, j] : work) sel.similarity[i][j] = sel.similarity[j][i] = sel.pairs[i][j].value;

  sel.chosen = 0;
  double best = sel.mean_similarity(0);
  for (std::size_t i = 1; i < n; ++i) {
    const double m = sel.mean_similarity(i);
    if (m > best) {
      best = m;
      sel.chosen = i;
    }
  }
  sel.replicas = std::move(models);
  return sel;
}

PrototypeRun select_prototype(const CorpusSlice& slice, const LdaConfig& config,
                              std::size_t replicas, const SimilarityOptions& options,
                              unsigned threads) {
  config.validate();
  if (replicas < 2) throw ConfigError("prototype.replicas must be >= 2");
  std::vector<TrainResult> runs(replicas);
  std::vector<std::uint64_t> seeds(replicas);
  parallel_for(replicas, threads, [&](std::size_t r) {
    LdaConfig c = config;
    c.seed = config.seed + r;
    seeds[r] = c.seed;
    try {
      runs[r] = train(slice, c);
    } catch (const std::exception& e) {
      throw std::runtime_error("replica " + std::to_string(r) + " failed: " + e.what());
    }
  });
  std::vector<TopicModel> models;
  models.reserve(replicas);
  for (auto& r : runs) models.push_back(r.model);
  PrototypeRun out;
  out.selection = select_among(std::move(models), options, threads);
  out.selection.seeds = std::move(seeds);
  out.chosen_state = std::move(runs[out.selection.chosen].state);
  return out;
}

std::string prototype_report_json(const PrototypeSelection& selection) {
  using nlohmann::json;
  const std::size_t n = selection.similarity.size();
  json means = json::array(), flags = json::array();
  for (std::size_t i = 0; i < n; ++i) means.push_back(selection.mean_similarity(i));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto& p = selection.pairs[i][j];
      flags.push_back({{"a", i},
                       {"b", j},
                       {"fraction_a", p.fraction_a},
                       {"fraction_b", p.fraction_b},
                       {"matched_a", p.matched_a},
                       {"matched_b", p.matched_b}});
    }
  json j = {{"replicas", n},
            {"seeds", selection.seeds},
            {"similarity", selection.similarity},
            {"mean_similarity", std::move(means)},
            {"chosen", selection.chosen},
            {"match_flags", std::move(flags)}};
  return j.dump(1) + "\n";
}

}  // namespace narrshift
