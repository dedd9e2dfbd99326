#include "narrshift/lda.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "json.hpp"
#include "narrshift/util.hpp"

namespace narrshift {

using nlohmann::json;

LdaConfig LdaConfig::with_topics(std::uint32_t k) {
  LdaConfig c;
  c.topics = k;
  c.alpha = k > 0 ? 50.0 / k : 1.0;
  return c;
}

void LdaConfig::validate() const {
  if (topics < 1) throw ConfigError("lda.topics must be >= 1");
  if (!(alpha > 0.0)) throw ConfigError("lda.alpha must be > 0");
  if (!(eta > 0.0)) throw ConfigError("lda.eta must be > 0");
  if (sweeps < 1) throw ConfigError("lda.sweeps must be >= 1");
}

std::size_t CorpusSlice::token_count() const {
  std::size_t n = 0;
  for (auto d : documents) n += d.size();
  return n;
}

CorpusSlice make_slice(const ChunkedCorpus& corpus,
                       std::span<const std::size_t> document_indices) {
  CorpusSlice slice;
  slice.vocab_size = corpus.vocabulary.size();
  slice.documents.reserve(document_indices.size());
  for (auto i : document_indices) slice.documents.emplace_back(corpus.documents.at(i).tokens);
  return slice;
}

void AssignmentState::check_invariants(const CorpusSlice& slice) const {
  const std::size_t k_count = topics();
  if (assignments.size() != slice.documents.size())
    throw std::logic_error("assignment document count differs from slice");
  CountMatrix wk(slice.vocab_size, k_count), dk(slice.documents.size(), k_count);
  std::vector<std::uint64_t> nk(k_count, 0);
  for (std::size_t d = 0; d < slice.documents.size(); ++d) {
    const auto doc = slice.documents[d];
    if (assignments[d].size() != doc.size())
      throw std::logic_error("assignment length differs in document " + std::to_string(d));
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const TopicId k = assignments[d][i];
      if (k >= k_count) throw std::logic_error("topic id out of range");
      ++wk(doc[i], k);
      ++dk(d, k);
      ++nk[k];
    }
  }
  if (!(wk == word_topic)) throw std::logic_error("word-topic counts inconsistent");
  if (!(dk == doc_topic)) throw std::logic_error("doc-topic counts inconsistent");
  if (nk != topic_totals) throw std::logic_error("topic totals inconsistent");
}

AssignmentState state_from_assignments(const CorpusSlice& slice,
                                       std::vector<std::vector<TopicId>> assignments,
                                       std::uint32_t topics) {
  AssignmentState s;
  s.word_topic = CountMatrix(slice.vocab_size, topics);
  s.doc_topic = CountMatrix(slice.documents.size(), topics);
  s.topic_totals.assign(topics, 0);
  for (std::size_t d = 0; d < slice.documents.size(); ++d) {
    const auto doc = slice.documents[d];
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const TopicId k = assignments[d][i];
      ++s.word_topic(doc[i], k);
      ++s.doc_topic(d, k);
      ++s.topic_totals[k];
    }
  }
  s.assignments = std::move(assignments);
  return s;
}

AssignmentState init_assignments(const CorpusSlice& slice, const LdaConfig& config,
                                 Rng& rng) {
  config.validate();
  if (slice.token_count() == 0) throw std::invalid_argument("cannot initialize an empty corpus slice");
  std::vector<std::vector<TopicId>> z(slice.documents.size());
  for (std::size_t d = 0; d < slice.documents.size(); ++d) {
    z[d].resize(slice.documents[d].size());
    for (auto& k : z[d]) k = rng.below(config.topics);
  }
  return state_from_assignments(slice, std::move(z), config.topics);
}

void gibbs_sweep(AssignmentState& state, const CorpusSlice& slice,
                 const LdaConfig& config, Rng& rng, const FrozenCounts* frozen) {
  const std::size_t K = state.topics();
  const double v_eta =
      static_cast<double>(slice.smoothing_vocab ? slice.smoothing_vocab : slice.vocab_size) * config.eta;
  std::vector<double> weights(K);
  // Frozen totals stay separate so the live totals remain exact integers.
  std::vector<double> frozen_k(K, 0.0);
  if (frozen && !frozen->topic_totals.empty())
    for (std::size_t k = 0; k < K; ++k) frozen_k[k] = static_cast<double>(frozen->topic_totals[k]);

  for (std::size_t d = 0; d < slice.documents.size(); ++d) {
    const auto doc = slice.documents[d];
    auto dk = state.doc_topic.row(d);
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const WordId w = doc[i];
      TopicId& z = state.assignments[d][i];
      auto wk = state.word_topic.row(w);
      --wk[z];
      --dk[z];
      --state.topic_totals[z];

      const std::uint32_t* fwk = frozen && frozen->word_topic ? frozen->word_topic->row(w).data() : nullptr;
      double total = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double word_part = wk[k] + (fwk ? fwk[k] : 0u) + config.eta;
        const double denom = static_cast<double>(state.topic_totals[k]) + frozen_k[k] + v_eta;
        weights[k] = (dk[k] + config.alpha) * word_part / denom;
        total += weights[k];
      }
      z = static_cast<TopicId>(rng.categorical(weights, total));
      ++wk[z];
      ++dk[z];
      ++state.topic_totals[z];
    }
  }
}

TopicModel::TopicModel(LdaConfig config, CountMatrix word_topic)
    : config_(config), word_topic_(std::move(word_topic)),
      topic_totals_(word_topic_.cols(), 0) {
  for (std::size_t w = 0; w < word_topic_.rows(); ++w)
    for (std::size_t k = 0; k < word_topic_.cols(); ++k) topic_totals_[k] += word_topic_(w, k);
}

std::vector<double> TopicModel::topic_counts(TopicId k) const {
  if (k >= topics()) throw std::out_of_range("topic id out of range");
  std::vector<double> v(vocab_size());
  for (std::size_t w = 0; w < v.size(); ++w) v[w] = word_topic_(w, k);
  return v;
}

std::vector<double> TopicModel::relative_frequencies(TopicId k) const {
  auto v = topic_counts(k);
  const double total = static_cast<double>(topic_totals_[k]);
  if (total > 0)
    for (auto& x : v) x /= total;
  return v;
}

std::vector<WordId> TopicModel::top_words(TopicId k, std::size_t n) const {
  if (k >= topics()) throw std::out_of_range("topic id " + std::to_string(k) + " out of range");
  std::vector<WordId> ids;
  for (std::size_t w = 0; w < vocab_size(); ++w)
    if (word_topic_(w, k) > 0) ids.push_back(static_cast<WordId>(w));
  auto by_count = [&](WordId a, WordId b) {
    const auto ca = word_topic_(a, k), cb = word_topic_(b, k);
    return ca != cb ? ca > cb : a < b;
  };
  const std::size_t keep = std::min(n, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(), by_count);
  ids.resize(keep);
  return ids;
}

std::vector<std::string> top_word_strings(const TopicModel& model,
                                          const Vocabulary& vocabulary, TopicId k,
                                          std::size_t n) {
  std::vector<std::string> out;
  for (auto w : model.top_words(k, n)) out.push_back(vocabulary.word(w));
  return out;
}

TrainResult train(const CorpusSlice& slice, const LdaConfig& config) {
  config.validate();
  Rng rng(config.seed);
  TrainResult r;
  r.state = init_assignments(slice, config, rng);
  for (std::uint32_t s = 0; s < config.sweeps; ++s) gibbs_sweep(r.state, slice, config, rng);
  r.model = TopicModel(config, r.state.word_topic);
  return r;
}

namespace {
constexpr const char* kCheckpointFormat = "narrshift-lda-checkpoint/1";
}

void save_checkpoint(const TopicModel& model, std::uint64_t vocab_fingerprint,
                     const std::filesystem::path& path) {
  const auto& c = model.config();
  json cells = json::array();
  for (std::size_t w = 0; w < model.vocab_size(); ++w)
    for (std::size_t k = 0; k < model.topics(); ++k)
      if (auto n = model.word_topic()(w, k)) cells.push_back({w, k, n});
  json j = {{"format", kCheckpointFormat},
            {"config",
             {{"topics", c.topics}, {"alpha", c.alpha}, {"eta", c.eta},
              {"sweeps", c.sweeps}, {"seed", c.seed}}},
            {"vocab_fingerprint", hex64(vocab_fingerprint)},
            {"vocab_size", model.vocab_size()},
            {"word_topic", std::move(cells)}};
  write_file(path, j.dump() + "\n");
}

TopicModel load_checkpoint(const std::filesystem::path& path,
                           std::uint64_t expected_vocab_fingerprint) {
  const json j = json::parse(read_file(path));
  if (j.at("format") != kCheckpointFormat)
    throw std::runtime_error("unknown checkpoint format in " + path.string());
  if (j.at("vocab_fingerprint").get<std::string>() != hex64(expected_vocab_fingerprint))
    throw std::runtime_error("checkpoint " + path.string() + " was trained on a different vocabulary");
  LdaConfig c;
  const auto& jc = j.at("config");
  c.topics = jc.at("topics");
  c.alpha = jc.at("alpha");
  c.eta = jc.at("eta");
  c.sweeps = jc.at("sweeps");
  c.seed = jc.at("seed");
  CountMatrix wk(j.at("vocab_size").get<std::size_t>(), c.topics);
  for (const auto& cell : j.at("word_topic"))
    wk(cell.at(0).get<std::size_t>(), cell.at(1).get<std::size_t>()) = cell.at(2).get<std::uint32_t>();
  return TopicModel(c, std::move(wk));
}

}  // namespace narrshift
