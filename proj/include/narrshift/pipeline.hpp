#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "narrshift/config.hpp"

namespace narrshift {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum class Stage { kIngest, kFit, kRoll, kDetect, kExplain, kEvaluate, kReport };
inline constexpr Stage kAllStages[] = {Stage::kIngest,  Stage::kFit,      Stage::kRoll,
                                       Stage::kDetect,  Stage::kExplain,  Stage::kEvaluate,
                                       Stage::kReport};

std::string_view stage_name(Stage stage);
std::optional<Stage> parse_stage(std::string_view name);
/// Output directory of a stage below the configured out directory.
std::filesystem::path stage_dir(const PipelineConfig& config, Stage stage);

/// A stage could not complete (exit status 2).
class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The LLM endpoint could not be reached or kept failing (exit status 3).
class EndpointFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  bool force = false;
  bool mock = false;  // serve explain from the built-in replay endpoint
  unsigned threads = 1;
  std::ostream* log = nullptr;
};

enum class StageOutcome { kRan, kUpToDate };

/// Runs one stage. Each stage reads its upstream artifacts, rewrites its own
/// directory and finishes by writing run.json; a stage whose run.json would
/// be unchanged is skipped unless options.force is set.
StageOutcome run_stage(Stage stage, const PipelineConfig& config, const RunOptions& options);

/// All stages in order.
void run_all(const PipelineConfig& config, const RunOptions& options);

}  // namespace narrshift
