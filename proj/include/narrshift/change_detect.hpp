#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "narrshift/corpus.hpp"
#include "narrshift/lda.hpp"
#include "narrshift/rng.hpp"
#include "narrshift/rolling.hpp"

namespace narrshift {

struct DetectorConfig {
  std::uint32_t lookback = 4;     // z
  double mixture = 0.95;          // weight kept on the look-back distribution
  double alpha = 0.01;            // significance level
  std::uint32_t bootstrap = 500;  // B
  std::uint64_t min_tokens = 100; // current-chunk topic tokens needed to test
  std::uint64_t seed = 0;
  std::size_t impact_top_n = 5;
  /// Compare bootstrap samples with the current vector instead of the mixed
  /// look-back vector.
  bool compare_to_current = false;

  void validate() const;
};

/// u.v / (|u| |v|), 0 when either norm is 0. Throws std::invalid_argument on
/// a dimension mismatch.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// Chunks [first, last) feeding the look-back vector of topic k at chunk t:
/// first = max(t - z, last_change + 1, floor), last = t.
struct LookbackWindow {
  std::size_t first = 0;
  std::size_t last = 0;
  bool empty() const { return first >= last; }
};
LookbackWindow lookback_window(std::size_t t, std::uint32_t z,
                               std::optional<std::size_t> last_change,
                               std::size_t floor = 0);

/// Sum of topic-k counts over the window; nullopt when the window is empty.
std::optional<std::vector<double>> lookback_vector(
    std::span<const ChunkTopicSnapshot> snapshots, TopicId k, std::size_t t,
    std::uint32_t z, std::optional<std::size_t> last_change, std::size_t vocab_size,
    std::size_t floor = 0);

/// p * normalize(lookback) + (1 - p) * normalize(current), rescaled to the
/// look-back total; normalizing a zero vector gives zeros. nullopt when both
/// vectors are zero. Throws std::invalid_argument on a dimension mismatch.
std::optional<std::vector<double>> mix(std::span<const double> lookback,
                                       std::span<const double> current, double p);

/// B cosines between multinomial(n_current, mixed) draws and `reference`
/// (the mixed vector unless given), sorted ascending. Draws touch only the
/// support of `mixed`.
std::vector<double> bootstrap_similarities(std::span<const double> mixed,
                                           std::uint64_t n_current, std::uint32_t B,
                                           Rng& rng,
                                           std::span<const double> reference = {});

/// Lower alpha-quantile of sorted similarities: element ceil(alpha * B),
/// counting from 1 (the 5th smallest for B = 500, alpha = 0.01).
double lower_quantile(std::span<const double> sorted, double alpha);

/// nullopt when `mixed` has no mass or n_current is 0.
std::optional<double> bootstrap_threshold(std::span<const double> mixed,
                                          std::uint64_t n_current, std::uint32_t B,
                                          double alpha, Rng& rng);

struct WordImpact {
  WordId word = 0;
  double impact = 0.0;

  bool operator==(const WordImpact&) const = default;
};

/// impact(w) = dist(a, b) - dist(a without w, b without w), dist = 1 - cos,
/// over every word where either vector is non-zero. Returns the top_n by
/// impact descending, ties by word id.
std::vector<WordImpact> loo_impacts(std::span<const double> lookback_mixed,
                                    std::span<const double> current, std::size_t top_n);

/// Outcome of one bootstrap test of a current vector against a look-back.
struct TestOutcome {
  bool tested = false;
  bool change = false;
  std::uint64_t n_current = 0;
  double similarity = 0.0;  // NaN when not computable
  double threshold = 0.0;   // NaN when not tested
  std::vector<double> mixed;
};

/// The per-(topic, chunk) decision, without bookkeeping. `lookback` may be
/// nullopt (empty window).
TestOutcome test_change(const std::optional<std::vector<double>>& lookback,
                        std::span<const double> current, const DetectorConfig& config,
                        Rng& rng);

struct ChangeEvent {
  TopicId topic = 0;
  std::size_t chunk = 0;
  double similarity = 0.0;
  double threshold = 0.0;
  std::vector<WordImpact> impacts;
};

struct MonitorCell {
  std::uint64_t n_current = 0;
  double similarity = 0.0;
  double threshold = 0.0;
  bool tested = false;
  bool change = false;
};

/// cells[topic][chunk] over all chunks; only [first_monitored, chunks) are
/// ever tested.
struct MonitorSeries {
  std::size_t first_monitored = 0;
  std::size_t chunks = 0;
  std::vector<std::vector<MonitorCell>> cells;
  std::vector<std::optional<std::size_t>> last_change;

  std::size_t topics() const { return cells.size(); }
};

/// Sequential Topical Changes monitor. Look-back windows may reach back to
/// `window_floor` (0 lets them use warm-up chunks).
class ChangeDetector {
 public:
  ChangeDetector(DetectorConfig config, std::size_t topics, std::size_t vocab_size,
                 std::size_t first_monitored, std::size_t total_chunks,
                 std::size_t window_floor = 0);

  /// Tests topic k at chunk t, records the cell and, on a change, resets the
  /// topic's window. The generator is seeded per (topic, chunk).
  std::optional<ChangeEvent> detect(std::span<const ChunkTopicSnapshot> snapshots,
                                    TopicId k, std::size_t t);

  const MonitorSeries& series() const { return series_; }
  const DetectorConfig& config() const { return config_; }

 private:
  DetectorConfig config_;
  std::size_t vocab_size_;
  std::size_t window_floor_;
  MonitorSeries series_;
};

struct MonitorResult {
  MonitorSeries series;
  std::vector<ChangeEvent> events;  // ordered by chunk, then topic
};

/// Runs the detector over chunks [first_monitored, snapshots.size()),
/// topics in parallel within a chunk.
MonitorResult monitor(std::span<const ChunkTopicSnapshot> snapshots, std::size_t vocab_size,
                      std::size_t first_monitored, const DetectorConfig& config,
                      unsigned threads = 1);

/// monitor.csv: topic_id,chunk_index,period,n_current,similarity,threshold,
/// tested,change. Similarity/threshold are blank where undefined.
std::string monitor_csv(const MonitorSeries& series, std::span<const TimeChunk> chunks);
MonitorSeries parse_monitor_csv(const std::string& csv);

/// changes.json: events with period label and impact words.
std::string changes_json(std::span<const ChangeEvent> events, const Vocabulary& vocabulary,
                         std::span<const TimeChunk> chunks);
std::vector<ChangeEvent> parse_changes_json(const std::string& text,
                                            const Vocabulary& vocabulary);

}  // namespace narrshift
