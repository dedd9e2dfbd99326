#include "narrshift/rolling.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "narrshift/util.hpp"

namespace narrshift {

using nlohmann::json;

void RollingConfig::validate(std::size_t total_chunks) const {
  lda.validate();
  if (warmup < 1) throw ConfigError("rolling.warmup must be >= 1");
  if (memory < 1) throw ConfigError("rolling.memory must be >= 1");
  if (chunk_sweeps < 1) throw ConfigError("rolling.chunk_sweeps must be >= 1");
  if (replicas < 2) throw ConfigError("lda.replicas must be >= 2");
  if (warmup > total_chunks)
    throw ConfigError("rolling.warmup (" + std::to_string(warmup) + ") exceeds the " +
                      std::to_string(total_chunks) + " available chunks");
}

std::uint64_t ChunkTopicSnapshot::token_count() const {
  std::uint64_t n = 0;
  for (auto t : totals) n += t;
  return n;
}

std::vector<double> ChunkTopicSnapshot::dense(TopicId k, std::size_t vocab_size) const {
  std::vector<double> v(vocab_size, 0.0);
  accumulate(k, v);
  return v;
}

void ChunkTopicSnapshot::accumulate(TopicId k, std::span<double> out) const {
  if (k >= topics.size()) return;  // empty snapshot
  for (auto [w, c] : topics[k]) out[w] += c;
}

ChunkTopicSnapshot make_snapshot(std::size_t chunk, std::uint32_t topics,
                                 std::span<const std::span<const WordId>> documents,
                                 std::span<const std::vector<TopicId>> assignments) {
  ChunkTopicSnapshot s;
  s.chunk = chunk;
  s.topics.resize(topics);
  s.totals.assign(topics, 0);
  std::vector<std::vector<WordId>> words(topics);
  for (std::size_t d = 0; d < documents.size(); ++d)
    for (std::size_t i = 0; i < documents[d].size(); ++i)
      words[assignments[d][i]].push_back(documents[d][i]);
  for (std::uint32_t k = 0; k < topics; ++k) {
    auto& ws = words[k];
    std::sort(ws.begin(), ws.end());
    for (std::size_t i = 0; i < ws.size();) {
      std::size_t j = i;
      while (j < ws.size() && ws[j] == ws[i]) ++j;
      s.topics[k].emplace_back(ws[i], static_cast<std::uint32_t>(j - i));
      i = j;
    }
    s.totals[k] = ws.size();
  }
  return s;
}

namespace {

void mark_seen(RollingState& state, const ChunkedCorpus& corpus, std::size_t chunk) {
  for (auto di : corpus.chunks[chunk].documents)
    for (auto w : corpus.documents[di].tokens)
      if (!state.seen_words[w]) {
        state.seen_words[w] = true;
        ++state.seen_count;
      }
}

RollingState empty_state(const ChunkedCorpus& corpus, const RollingConfig& config) {
  RollingState state;
  state.config = config;
  state.seen_words.assign(corpus.vocabulary.size(), false);
  state.doc_topics.resize(corpus.documents.size());
  return state;
}

}  // namespace

RollingState fit_warmup(const ChunkedCorpus& corpus, const RollingConfig& config,
                        unsigned threads) {
  config.validate(corpus.chunks.size());
  RollingState state = empty_state(corpus, config);

  std::vector<std::size_t> doc_ids;
  for (std::size_t c = 0; c < config.warmup; ++c) {
    const auto& docs = corpus.chunks[c].documents;
    doc_ids.insert(doc_ids.end(), docs.begin(), docs.end());
    mark_seen(state, corpus, c);
  }
  CorpusSlice slice = make_slice(corpus, doc_ids);
  if (slice.token_count() == 0)
    throw std::invalid_argument("warm-up chunks contain no in-vocabulary tokens");
  slice.smoothing_vocab = state.seen_count;

  PrototypeRun run = select_prototype(slice, config.lda, config.replicas, config.similarity, threads);

  // Split the jointly trained assignments back into chunks.
  std::size_t offset = 0;
  for (std::size_t c = 0; c < config.warmup; ++c) {
    const auto n = corpus.chunks[c].documents.size();
    std::span<const std::span<const WordId>> docs(slice.documents.data() + offset, n);
    std::span<const std::vector<TopicId>> z(run.chosen_state.assignments.data() + offset, n);
    state.snapshots.push_back(make_snapshot(c, config.lda.topics, docs, z));
    for (std::size_t d = 0; d < n; ++d) {
      const auto row = run.chosen_state.doc_topic.row(offset + d);
      state.doc_topics[corpus.chunks[c].documents[d]].assign(row.begin(), row.end());
    }
    offset += n;
  }
  state.warmup_selection = std::move(run.selection);
  return state;
}

std::pair<CountMatrix, std::vector<std::uint64_t>> memory_counts(const RollingState& state,
                                                                 std::size_t t,
                                                                 std::size_t vocab_size) {
  const std::uint32_t K = state.config.lda.topics;
  CountMatrix wk(vocab_size, K);
  std::vector<std::uint64_t> totals(K, 0);
  const std::size_t from = t > state.config.memory ? t - state.config.memory : 0;
  for (std::size_t c = from; c < t; ++c) {
    const auto& snap = state.snapshots.at(c);
    for (std::uint32_t k = 0; k < snap.topics.size(); ++k) {
      for (auto [w, n] : snap.topics[k]) wk(w, k) += n;
      totals[k] += snap.totals[k];
    }
  }
  return {std::move(wk), std::move(totals)};
}

const ChunkTopicSnapshot& roll(RollingState& state, const ChunkedCorpus& corpus,
                               std::size_t t) {
  if (t != state.next_chunk())
    throw std::logic_error("roll called for chunk " + std::to_string(t) + " but chunk " +
                           std::to_string(state.next_chunk()) + " is next");
  if (t >= corpus.chunks.size()) throw std::out_of_range("chunk index beyond corpus");
  const auto& cfg = state.config;
  const std::uint32_t K = cfg.lda.topics;

  mark_seen(state, corpus, t);
  CorpusSlice slice = make_slice(corpus, corpus.chunks[t].documents);
  slice.smoothing_vocab = state.seen_count;
  if (slice.token_count() == 0) {
    ChunkTopicSnapshot empty;
    empty.chunk = t;
    empty.topics.resize(K);
    empty.totals.assign(K, 0);
    for (auto di : corpus.chunks[t].documents) state.doc_topics[di].assign(K, 0);
    state.snapshots.push_back(std::move(empty));
    return state.snapshots.back();
  }

  auto [mem_wk, mem_k] = memory_counts(state, t, slice.vocab_size);
  FrozenCounts frozen{&mem_wk, mem_k};
  Rng rng(derive_seed(cfg.lda.seed, kRollStream, t));

  const double v_eta = static_cast<double>(slice.smoothing_vocab) * cfg.lda.eta;
  std::vector<double> weights(K);
  std::vector<std::vector<TopicId>> z(slice.documents.size());
  for (std::size_t d = 0; d < slice.documents.size(); ++d) {
    z[d].resize(slice.documents[d].size());
    for (std::size_t i = 0; i < z[d].size(); ++i) {
      const auto row = mem_wk.row(slice.documents[d][i]);
      bool known = false;
      double total = 0.0;
      for (std::uint32_t k = 0; k < K; ++k) {
        known = known || row[k] > 0;
        weights[k] = (row[k] + cfg.lda.eta) / (static_cast<double>(mem_k[k]) + v_eta);
        total += weights[k];
      }
      z[d][i] = known ? static_cast<TopicId>(rng.categorical(weights, total)) : rng.below(K);
    }
  }
  AssignmentState chunk_state = state_from_assignments(slice, std::move(z), K);
  for (std::uint32_t s = 0; s < cfg.chunk_sweeps; ++s)
    gibbs_sweep(chunk_state, slice, cfg.lda, rng, &frozen);

  for (std::size_t d = 0; d < slice.documents.size(); ++d) {
    const auto row = chunk_state.doc_topic.row(d);
    state.doc_topics[corpus.chunks[t].documents[d]].assign(row.begin(), row.end());
  }
  state.snapshots.push_back(make_snapshot(t, K, slice.documents, chunk_state.assignments));
  return state.snapshots.back();
}

RollingState resume_rolling(const ChunkedCorpus& corpus, const RollingConfig& config,
                            std::vector<ChunkTopicSnapshot> snapshots,
                            std::vector<std::vector<std::uint32_t>> doc_topics) {
  config.validate(corpus.chunks.size());
  if (snapshots.size() > corpus.chunks.size())
    throw std::invalid_argument("more snapshots than corpus chunks");
  RollingState state = empty_state(corpus, config);
  for (std::size_t c = 0; c < snapshots.size(); ++c) {
    if (snapshots[c].chunk != c) throw std::invalid_argument("snapshots are not consecutive");
    mark_seen(state, corpus, c);
  }
  state.snapshots = std::move(snapshots);
  if (!doc_topics.empty()) {
    if (doc_topics.size() != corpus.documents.size())
      throw std::invalid_argument("doc-topic table does not match corpus");
    state.doc_topics = std::move(doc_topics);
  }
  return state;
}

RollingState run_rolling(const ChunkedCorpus& corpus, const RollingConfig& config,
                         unsigned threads) {
  RollingState state = fit_warmup(corpus, config, threads);
  for (std::size_t t = config.warmup; t < corpus.chunks.size(); ++t) roll(state, corpus, t);
  return state;
}

// --- storage ----------------------------------------------------------------

void save_snapshots(const std::vector<ChunkTopicSnapshot>& snapshots,
                    const ChunkedCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json index = json::array();
  for (const auto& s : snapshots) {
    json cells = json::array();
    for (std::size_t k = 0; k < s.topics.size(); ++k)
      for (auto [w, n] : s.topics[k]) cells.push_back({w, k, n});
    const auto file = "t=" + std::to_string(s.chunk) + ".json";
    json j = {{"chunk", s.chunk},
              {"topics", s.topics.size()},
              {"totals", s.totals},
              {"cells", std::move(cells)}};
    write_file(dir / file, j.dump() + "\n");
    const auto& period = corpus.chunks.at(s.chunk).period;
    index.push_back({{"chunk", s.chunk},
                     {"period_start", period.first_day().to_string()},
                     {"period_end", period.next().first_day().to_string()},
                     {"tokens", s.token_count()},
                     {"file", file}});
  }
  write_file(dir / "index.json", index.dump(1) + "\n");
}

std::vector<ChunkTopicSnapshot> load_snapshots(const std::filesystem::path& dir) {
  const json index = json::parse(read_file(dir / "index.json"));
  std::vector<ChunkTopicSnapshot> out;
  for (const auto& entry : index) {
    const json j = json::parse(read_file(dir / entry.at("file").get<std::string>()));
    ChunkTopicSnapshot s;
    s.chunk = j.at("chunk");
    const std::size_t K = j.at("topics");
    s.topics.resize(K);
    s.totals = j.at("totals").get<std::vector<std::uint64_t>>();
    for (const auto& cell : j.at("cells"))
      s.topics.at(cell.at(1).get<std::size_t>())
          .emplace_back(cell.at(0).get<WordId>(), cell.at(2).get<std::uint32_t>());
    for (auto& t : s.topics) std::sort(t.begin(), t.end());
    if (s.chunk != out.size()) throw std::runtime_error("snapshot index is not consecutive");
    out.push_back(std::move(s));
  }
  return out;
}

void save_doc_topics(const RollingState& state, const ChunkedCorpus& corpus,
                     const std::filesystem::path& path) {
  std::string body;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    if (state.doc_topics[d].empty()) continue;
    body += json({{"doc", corpus.documents[d].id}, {"topics", state.doc_topics[d]}}).dump();
    body += '\n';
  }
  write_file(path, body);
}

std::vector<std::vector<std::uint32_t>> load_doc_topics(const ChunkedCorpus& corpus,
                                                        const std::filesystem::path& path) {
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) by_id.emplace(corpus.documents[d].id, d);
  std::vector<std::vector<std::uint32_t>> out(corpus.documents.size());
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    auto it = by_id.find(j.at("doc").get<std::string>());
    if (it == by_id.end()) throw std::runtime_error("doc_topics references unknown document");
    out[it->second] = j.at("topics").get<std::vector<std::uint32_t>>();
  }
  return out;
}

}  // namespace narrshift
