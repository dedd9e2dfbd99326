#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "narrshift/change_detect.hpp"
#include "narrshift/corpus.hpp"
#include "narrshift/lda.hpp"
#include "narrshift/narrative.hpp"
#include "narrshift/rolling.hpp"

namespace narrshift {

/// Parses the TOML subset used by pipeline configs: [tables] and
/// [dotted.tables], bare or quoted keys, basic and literal strings, integers,
/// floats, booleans and (possibly multi-line) arrays of those, plus comments.
/// Throws ConfigError with the line number on anything else.
nlohmann::json parse_toml(std::string_view text);

struct CorpusSettings {
  std::vector<std::filesystem::path> paths;  // JSONL files
  std::uint64_t min_count = 5;
  std::size_t min_length = 3;
  bool lowercase = true;
  bool strip_numeric = true;
  std::filesystem::path stopwords;  // empty: built-in list
  bool skip_malformed = false;
};

struct ExplainSettings {
  DossierOptions dossier;
  std::filesystem::path prompt_template;  // empty: bundled template
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  CorpusSettings corpus;
  RollingConfig rolling;  // rolling.lda holds K, alpha, eta, warm-up sweeps
  DetectorConfig detect;
  ExplainSettings explain;
  EndpointConfig endpoint;
  std::filesystem::path labels;  // empty: evaluate reports no labels

  /// Field-level validation of everything that does not need the corpus.
  void validate() const;
  /// The effective parameters, for run.json and hashing.
  nlohmann::json to_json() const;
};

/// Reads a config; relative paths resolve against the file's directory.
/// Unknown keys and mistyped values throw ConfigError naming the field.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_toml(std::string_view text,
                                const std::filesystem::path& base_dir = {});

}  // namespace narrshift
