#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "narrshift/change_detect.hpp"
#include "narrshift/corpus.hpp"
#include "narrshift/rolling.hpp"

namespace narrshift {

/// (topic, chunk) of a detected change.
using ChangeKey = std::pair<TopicId, std::size_t>;

struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tally with "narrative shift" (true) as the positive class. Every labeled
/// change needs a prediction and vice versa; mismatches throw
/// EvaluationError naming the offending keys.
ConfusionMatrix confusion(const std::map<ChangeKey, bool>& predictions,
                          const std::map<ChangeKey, bool>& labels);

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> explanation_accuracy;
};

/// Zero denominators give 0. Throws EvaluationError on an empty matrix.
MetricsReport metrics(const ConfusionMatrix& cm);

/// All matrices with the given total, positives and predicted positives whose
/// accuracy and F1, rounded to `decimals`, equal the targets.
std::vector<ConfusionMatrix> matrices_matching(std::uint64_t total, std::uint64_t positives,
                                               std::uint64_t predicted_positive,
                                               double accuracy, double f1, int decimals = 4);

struct AnnotationLabel {
  TopicId topic = 0;
  std::size_t chunk = 0;
  bool is_narrative_shift = false;
  std::string note;
  /// Optional manual judgment of the generated explanation.
  std::optional<bool> explanation_correct;
};

/// CSV with header topic_id,chunk_index,is_narrative_shift,note and an
/// optional explanation_correct column. Booleans: true/false/1/0/yes/no.
std::vector<AnnotationLabel> parse_labels_csv(const std::string& text);

/// Correct explanations among labels marked as narrative shifts that carry a
/// judgment; nullopt when there are none.
std::optional<double> explanation_accuracy(std::span<const AnnotationLabel> labels);

nlohmann::json metrics_json(const ConfusionMatrix& cm, const MetricsReport& report);

/// Top words of each topic over all snapshots, joined for panel titles.
std::vector<std::string> topic_titles(std::span<const ChunkTopicSnapshot> snapshots,
                                      const Vocabulary& vocabulary, std::size_t n = 5);

/// Small-multiple grid: one panel per topic with similarity and threshold
/// polylines and a red vertical marker at each change.
std::string monitor_svg(const MonitorSeries& series, std::span<const ChangeEvent> changes,
                        std::span<const std::string> titles,
                        std::span<const TimeChunk> chunks);

/// Writes monitor.csv, monitor_grid.svg and manifest.json (FNV-1a checksums
/// of both files plus the config hash) into `dir`.
void emit_monitor_outputs(const MonitorSeries& series, std::span<const ChangeEvent> changes,
                          std::span<const std::string> titles,
                          std::span<const TimeChunk> chunks, const std::filesystem::path& dir,
                          const std::string& config_hash);

}  // namespace narrshift
