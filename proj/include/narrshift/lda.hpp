#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "narrshift/corpus.hpp"
#include "narrshift/rng.hpp"

namespace narrshift {

using TopicId = std::uint32_t;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LdaConfig {
  std::uint32_t topics = 50;
  double alpha = 1.0;  // symmetric doc-topic prior, 50 / topics by default
  double eta = 0.01;   // symmetric word-topic prior
  std::uint32_t sweeps = 200;
  std::uint64_t seed = 0;

  /// Priors alpha = 50/K, eta = 0.01.
  static LdaConfig with_topics(std::uint32_t k);
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Dense row-major table of non-negative counts.
class CountMatrix {
 public:
  CountMatrix() = default;
  CountMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::uint32_t& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  std::uint32_t operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  std::span<const std::uint32_t> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<std::uint32_t> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  const std::vector<std::uint32_t>& data() const { return data_; }

  bool operator==(const CountMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint32_t> data_;
};

/// Bag-of-words view over a set of documents. Spans point into storage owned
/// elsewhere (normally a ChunkedCorpus).
struct CorpusSlice {
  std::vector<std::span<const WordId>> documents;
  std::size_t vocab_size = 0;
  /// V in the word-topic prior denominator; 0 means vocab_size. Rolling
  /// fits set this to the number of words seen so far.
  std::size_t smoothing_vocab = 0;

  std::size_t token_count() const;
};

CorpusSlice make_slice(const ChunkedCorpus& corpus,
                       std::span<const std::size_t> document_indices);

/// Token-level topic assignments with the count tables they imply.
struct AssignmentState {
  std::vector<std::vector<TopicId>> assignments;  // per document, per token
  CountMatrix word_topic;                         // V x K
  CountMatrix doc_topic;                          // D x K
  std::vector<std::uint64_t> topic_totals;        // K

  std::size_t topics() const { return topic_totals.size(); }

  /// Recounts everything from `assignments`; throws std::logic_error on the
  /// first inconsistency.
  void check_invariants(const CorpusSlice& slice) const;
};

/// Read-only pseudo-counts added on the word-topic side of the conditional.
struct FrozenCounts {
  const CountMatrix* word_topic = nullptr;  // V x K
  std::span<const std::uint64_t> topic_totals;
};

/// Topic for every token drawn uniformly with rng.below(K), in document then
/// token order. Throws std::invalid_argument on an empty slice.
AssignmentState init_assignments(const CorpusSlice& slice, const LdaConfig& config,
                                 Rng& rng);

/// Builds the count tables for given assignments.
AssignmentState state_from_assignments(const CorpusSlice& slice,
                                       std::vector<std::vector<TopicId>> assignments,
                                       std::uint32_t topics);

/// One collapsed Gibbs pass in document/token order. For each token the
/// current assignment is removed from the counts, then a topic is drawn with
/// weight
///   (n_dk + alpha) * (n_wk + f_wk + eta) / (n_k + f_k + V * eta)
/// using rng.categorical (one uniform per token), V being the slice's
/// smoothing vocabulary.
void gibbs_sweep(AssignmentState& state, const CorpusSlice& slice,
                 const LdaConfig& config, Rng& rng,
                 const FrozenCounts* frozen = nullptr);

/// Final-sweep counts of one trained LDA.
class TopicModel {
 public:
  TopicModel() = default;
  TopicModel(LdaConfig config, CountMatrix word_topic);

  const LdaConfig& config() const { return config_; }
  std::size_t topics() const { return word_topic_.cols(); }
  std::size_t vocab_size() const { return word_topic_.rows(); }
  const CountMatrix& word_topic() const { return word_topic_; }
  const std::vector<std::uint64_t>& topic_totals() const { return topic_totals_; }

  std::uint32_t count(WordId w, TopicId k) const { return word_topic_(w, k); }
  /// Counts of topic k over the vocabulary.
  std::vector<double> topic_counts(TopicId k) const;
  /// n_wk / n_k; all zeros when the topic is empty.
  std::vector<double> relative_frequencies(TopicId k) const;

  /// Words with the highest count in topic k, ties by ascending id; words
  /// with zero count are never returned. Throws std::out_of_range for bad k.
  std::vector<WordId> top_words(TopicId k, std::size_t n) const;

 private:
  LdaConfig config_;
  CountMatrix word_topic_;
  std::vector<std::uint64_t> topic_totals_;
};

std::vector<std::string> top_word_strings(const TopicModel& model,
                                          const Vocabulary& vocabulary, TopicId k,
                                          std::size_t n);

struct TrainResult {
  AssignmentState state;
  TopicModel model;
};

/// init_assignments followed by config.sweeps Gibbs sweeps, all driven by one
/// Rng seeded with config.seed.
TrainResult train(const CorpusSlice& slice, const LdaConfig& config);

/// JSON checkpoint: format tag, config, vocabulary fingerprint and size, and
/// the non-zero word-topic cells as [word, topic, count] triples.
void save_checkpoint(const TopicModel& model, std::uint64_t vocab_fingerprint,
                     const std::filesystem::path& path);
TopicModel load_checkpoint(const std::filesystem::path& path,
                           std::uint64_t expected_vocab_fingerprint);

}  // namespace narrshift
