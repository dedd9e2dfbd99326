#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "narrshift/corpus.hpp"
#include "narrshift/rolling.hpp"

namespace narrshift {

/// Two-theme news stream with a planted shift: from `shift_chunk` on, the
/// dominant words of the first theme are replaced by new ones. Every
/// document is about one theme.
struct PlantedShiftOptions {
  std::size_t chunks = 40;
  std::size_t shift_chunk = 20;
  std::size_t docs_per_chunk = 20;  // split evenly between the themes
  std::size_t doc_length = 100;
  std::size_t replaced_words = 6;
  Month start{2010, 1};
  std::uint64_t seed = 1;
  /// Documents take word counts by systematic sampling from the theme
  /// distribution (counts within 1 of expectation) instead of i.i.d. draws.
  bool stratified = true;
};

struct PlantedShiftCorpus {
  std::vector<RawRecord> records;
  std::vector<std::string> shifted_theme_words;  // before the shift
  std::vector<std::string> replacement_words;    // dominant words after it
  std::vector<std::string> stable_theme_words;
};

PlantedShiftCorpus planted_shift_corpus(const PlantedShiftOptions& options);

/// One JSON object per line: id, date, text.
std::string records_jsonl(const std::vector<RawRecord>& records);

/// Snapshots whose topic-word counts are i.i.d. multinomial draws from fixed
/// Zipf(s) distributions (a different word order per topic); a stationary
/// stream for calibration. Word ids range over [0, vocab_size).
std::vector<ChunkTopicSnapshot> stationary_snapshots(std::size_t topics, std::size_t chunks,
                                                     std::size_t vocab_size,
                                                     std::uint32_t tokens_per_topic,
                                                     double zipf_s, std::uint64_t seed);

}  // namespace narrshift
