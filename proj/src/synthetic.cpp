#include "narrshift/synthetic.hpp"

#include <cmath>
#include <numeric>

#include "json.hpp"
#include "narrshift/rng.hpp"

namespace narrshift {

namespace {

const std::vector<std::string> kEconomy = {
    "market",   "stocks",   "investors", "bank",     "rates",     "inflation",
    "bonds",    "earnings", "trading",   "economy",  "federal",   "reserve",
    "shares",   "profits",  "dollar",    "treasury", "lending",   "credit",
    "growth",   "quarter",  "exports",   "tariffs",  "currency",  "deficit",
    "budget",   "wages",    "hiring",    "factory",  "consumer",  "retail"};

const std::vector<std::string> kOutbreak = {"virus",    "outbreak", "hospital",
                                            "patients", "vaccine",  "quarantine",
                                            "doctors",  "infection"};

const std::vector<std::string> kSports = {
    "season",   "coach",     "league",   "playoffs", "stadium", "players",
    "fans",     "champion",  "tournament", "score",  "defense", "striker",
    "goalkeeper", "injury",  "transfer", "referee",  "match",   "trophy",
    "captain",  "pitcher",   "inning",   "quarterback", "touchdown", "rookie",
    "draft",    "contract",  "roster",   "arena",    "medal",   "record"};

std::vector<double> zipf(std::size_t n, double s) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), s);
  return w;
}

std::vector<std::size_t> draw_document(const std::vector<double>& weights, std::size_t length,
                                       bool stratified, Rng& rng) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> tokens;
  tokens.reserve(length);
  if (stratified) {
    const double u = rng.uniform();
    std::size_t w = 0;
    double acc = weights[0] / total;
    for (std::size_t i = 0; i < length; ++i) {
      const double target = (static_cast<double>(i) + u) / static_cast<double>(length);
      while (target >= acc && w + 1 < weights.size()) acc += weights[++w] / total;
      tokens.push_back(w);
    }
    for (std::size_t i = tokens.size(); i > 1; --i)
      std::swap(tokens[i - 1], tokens[rng.below(static_cast<std::uint32_t>(i))]);
  } else {
    for (std::size_t i = 0; i < length; ++i) tokens.push_back(rng.categorical(weights, total));
  }
  return tokens;
}

std::string to_text(const std::vector<std::size_t>& tokens, const std::vector<std::string>& words) {
  std::string text;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::string w = words[tokens[i]];
    const bool sentence_start = i % 10 == 0;
    if (sentence_start) {
      if (i) text += ' ';
      w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    } else {
      text += ' ';
    }
    text += w;
    if (i % 10 == 9 || i + 1 == tokens.size()) text += '.';
  }
  return text;
}

}  // namespace

PlantedShiftCorpus planted_shift_corpus(const PlantedShiftOptions& o) {
  if (o.replaced_words > kOutbreak.size() || o.replaced_words > kEconomy.size())
    throw std::invalid_argument("too many replaced words");
  if (o.docs_per_chunk < 2 || o.doc_length < 1)
    throw std::invalid_argument("planted-shift corpus needs >= 2 docs per chunk");
  PlantedShiftCorpus out;
  out.shifted_theme_words = kEconomy;
  out.stable_theme_words = kSports;
  out.replacement_words.assign(kOutbreak.begin(),
                               kOutbreak.begin() + static_cast<std::ptrdiff_t>(o.replaced_words));
  auto after = kEconomy;
  for (std::size_t i = 0; i < o.replaced_words; ++i) after[i] = kOutbreak[i];

  const auto weights_a = zipf(kEconomy.size(), 1.0);
  const auto weights_b = zipf(kSports.size(), 1.0);
  Rng rng(derive_seed(o.seed, 0x53796e74));
  Month month = o.start;
  for (std::size_t t = 0; t < o.chunks; ++t, month = month.next()) {
    const auto& theme_a = t >= o.shift_chunk ? after : kEconomy;
    for (std::size_t d = 0; d < o.docs_per_chunk; ++d) {
      const bool first_theme = d % 2 == 0;
      const auto tokens =
          draw_document(first_theme ? weights_a : weights_b, o.doc_length, o.stratified, rng);
      RawRecord r;
      char id[32];
      std::snprintf(id, sizeof id, "c%03zu-d%03zu", t, d);
      r.id = id;
      r.date = Date{month.year, month.month, static_cast<int>(1 + d % 28)};
      r.text = to_text(tokens, first_theme ? theme_a : kSports);
      out.records.push_back(std::move(r));
    }
  }
  return out;
}

std::string records_jsonl(const std::vector<RawRecord>& records) {
  std::string out;
  for (const auto& r : records)
    out += nlohmann::json{{"id", r.id}, {"date", r.date.to_string()}, {"text", r.text}}.dump() +
           "\n";
  return out;
}

std::vector<ChunkTopicSnapshot> stationary_snapshots(std::size_t topics, std::size_t chunks,
                                                     std::size_t vocab_size,
                                                     std::uint32_t tokens_per_topic,
                                                     double zipf_s, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x53746174));
  const auto base = zipf(vocab_size, zipf_s);
  std::vector<AliasTable> tables;
  for (std::size_t k = 0; k < topics; ++k) {
    std::vector<std::size_t> order(vocab_size);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(static_cast<std::uint32_t>(i))]);
    std::vector<double> w(vocab_size);
    for (std::size_t i = 0; i < vocab_size; ++i) w[order[i]] = base[i];
    tables.emplace_back(w);
  }
  std::vector<ChunkTopicSnapshot> out;
  for (std::size_t t = 0; t < chunks; ++t) {
    ChunkTopicSnapshot s;
    s.chunk = t;
    s.topics.resize(topics);
    s.totals.assign(topics, tokens_per_topic);
    for (std::size_t k = 0; k < topics; ++k) {
      std::vector<std::uint32_t> counts(vocab_size, 0);
      for (std::uint32_t i = 0; i < tokens_per_topic; ++i) ++counts[tables[k].sample(rng)];
      for (std::size_t w = 0; w < vocab_size; ++w)
        if (counts[w]) s.topics[k].emplace_back(static_cast<WordId>(w), counts[w]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace narrshift
