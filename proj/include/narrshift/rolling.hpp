#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "narrshift/corpus.hpp"
#include "narrshift/lda.hpp"
#include "narrshift/prototype.hpp"

namespace narrshift {

struct RollingConfig {
  LdaConfig lda = LdaConfig::with_topics(50);  // sweeps = warm-up sweeps
  std::uint32_t warmup = 12;                   // w
  std::uint32_t memory = 4;                    // m
  std::uint32_t chunk_sweeps = 50;
  std::size_t replicas = 10;                   // N for the warm-up prototype
  SimilarityOptions similarity;

  /// Throws ConfigError on w < 1, m < 1, chunk_sweeps < 1, replicas < 2 or
  /// w > total_chunks.
  void validate(std::size_t total_chunks) const;
};

/// Word-topic counts of the tokens of one chunk, stored sparsely.
struct ChunkTopicSnapshot {
  using Cell = std::pair<WordId, std::uint32_t>;

  std::size_t chunk = 0;
  std::vector<std::vector<Cell>> topics;  // K lists sorted by word id
  std::vector<std::uint64_t> totals;      // K

  std::uint64_t token_count() const;
  /// Dense counts of topic k over a vocabulary of `vocab_size` words.
  std::vector<double> dense(TopicId k, std::size_t vocab_size) const;
  /// Adds topic k's counts into `out` (size >= vocab).
  void accumulate(TopicId k, std::span<double> out) const;

  bool operator==(const ChunkTopicSnapshot&) const = default;
};

/// Builds a snapshot from per-token assignments.
ChunkTopicSnapshot make_snapshot(std::size_t chunk, std::uint32_t topics,
                                 std::span<const std::span<const WordId>> documents,
                                 std::span<const std::vector<TopicId>> assignments);

struct RollingState {
  RollingConfig config;
  std::vector<ChunkTopicSnapshot> snapshots;  // index = chunk, modeled so far
  std::vector<bool> seen_words;
  std::size_t seen_count = 0;
  /// Doc-topic counts per corpus document; empty until its chunk is modeled.
  std::vector<std::vector<std::uint32_t>> doc_topics;
  PrototypeSelection warmup_selection;

  std::size_t next_chunk() const { return snapshots.size(); }
};

/// Trains the LDAPrototype on all documents of chunks [0, w) jointly and
/// splits its assignments into per-chunk snapshots. Throws ConfigError for a
/// bad config and std::invalid_argument for an empty warm-up.
RollingState fit_warmup(const ChunkedCorpus& corpus, const RollingConfig& config,
                        unsigned threads = 1);

/// Sum of snapshots max(0, t - m) .. t - 1 as a dense V x K table.
std::pair<CountMatrix, std::vector<std::uint64_t>> memory_counts(
    const RollingState& state, std::size_t t, std::size_t vocab_size);

/// Models chunk t conditioned on the frozen memory of the previous m chunks.
/// Tokens start from the memory-implied word-topic conditional (uniform for
/// words without memory counts), then get chunk_sweeps Gibbs sweeps.
/// Throws std::logic_error unless t == state.next_chunk().
const ChunkTopicSnapshot& roll(RollingState& state, const ChunkedCorpus& corpus,
                               std::size_t t);

/// Rebuilds a state from stored snapshots of chunks [0, snapshots.size());
/// the seen vocabulary is recomputed from the corpus.
RollingState resume_rolling(const ChunkedCorpus& corpus, const RollingConfig& config,
                            std::vector<ChunkTopicSnapshot> snapshots,
                            std::vector<std::vector<std::uint32_t>> doc_topics);

/// Warm-up followed by roll() for every remaining chunk.
RollingState run_rolling(const ChunkedCorpus& corpus, const RollingConfig& config,
                         unsigned threads = 1);

/// snapshots/t=<index>.json plus snapshots/index.json (chunk -> period, file).
void save_snapshots(const std::vector<ChunkTopicSnapshot>& snapshots,
                    const ChunkedCorpus& corpus, const std::filesystem::path& dir);
std::vector<ChunkTopicSnapshot> load_snapshots(const std::filesystem::path& dir);

/// doc_topics.jsonl: {"doc": id, "topics": [counts]} for modeled documents.
void save_doc_topics(const RollingState& state, const ChunkedCorpus& corpus,
                     const std::filesystem::path& path);
std::vector<std::vector<std::uint32_t>> load_doc_topics(const ChunkedCorpus& corpus,
                                                        const std::filesystem::path& path);

}  // namespace narrshift
