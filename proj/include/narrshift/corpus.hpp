#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace narrshift {

using WordId = std::uint32_t;

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Calendar date with day precision.
struct Date {
  int year = 1970;
  int month = 1;
  int day = 1;

  /// Strict `YYYY-MM-DD`; nullopt for anything else or impossible dates.
  static std::optional<Date> parse(std::string_view text);
  std::string to_string() const;

  auto operator<=>(const Date&) const = default;
};

/// One calendar month, used both as a chunk period and a display label.
struct Month {
  int year = 1970;
  int month = 1;

  static Month of(const Date& d) { return {d.year, d.month}; }
  Month next() const {
    return month == 12 ? Month{year + 1, 1} : Month{year, month + 1};
  }
  Date first_day() const { return {year, month, 1}; }
  /// "10/2014"
  std::string label() const;

  auto operator<=>(const Month&) const = default;
};

/// Months from `from` to `to`, counting `from` as 0.
int months_between(Month from, Month to);

struct RawRecord {
  std::string id;
  Date date;
  std::string text;
};

struct IngestIssue {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct IngestResult {
  std::vector<RawRecord> records;
  std::vector<IngestIssue> skipped;
};

enum class IngestMode { kStrict, kSkipWithReport };

/// Reads JSONL with string fields `id`, `date` (YYYY-MM-DD) and `text`.
/// Blank lines are ignored. Strict mode throws CorpusError naming the line.
IngestResult ingest_jsonl(const std::filesystem::path& path,
                          IngestMode mode = IngestMode::kStrict);
IngestResult ingest_jsonl_stream(std::istream& in,
                                 IngestMode mode = IngestMode::kStrict);

struct TokenizerRules {
  bool lowercase = true;
  std::size_t min_length = 3;  // in code points
  bool strip_numeric = true;   // drop tokens made only of digits
  std::set<std::string, std::less<>> stopwords;

  static TokenizerRules defaults();  // built-in English stopword list
  /// One word per line; '#' starts a comment.
  static std::set<std::string, std::less<>> read_stopwords(
      const std::filesystem::path& path);
};

/// Splits on anything that is not a letter or digit, so "U.S.-China"
/// yields u, s, china before length filtering.
std::vector<std::string> tokenize(std::string_view raw_text,
                                  const TokenizerRules& rules);

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> words, std::vector<std::uint64_t> counts);

  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }

  const std::string& word(WordId id) const { return words_.at(id); }
  std::uint64_t count(WordId id) const { return counts_.at(id); }
  std::optional<WordId> find(std::string_view word) const;

  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  /// FNV-1a over the words in id order; identifies a vocabulary in checkpoints.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> words_;
  std::vector<std::uint64_t> counts_;
  std::unordered_map<std::string, WordId> index_;
};

/// Keeps words with frequency >= min_count; ids ordered by descending
/// frequency, ties lexicographically. Throws CorpusError when nothing
/// survives or min_count is 0.
Vocabulary build_vocabulary(
    std::span<const std::vector<std::string>> token_streams,
    std::uint64_t min_count);

struct Document {
  std::string id;
  Date date;
  std::string raw_text;
  std::vector<WordId> tokens;
};

struct TimeChunk {
  std::size_t index = 0;
  Month period;  // covers [period.first_day(), period.next().first_day())
  std::vector<std::size_t> documents;  // positions into ChunkedCorpus::documents
};

/// One chunk per calendar month from the earliest to the latest document,
/// empty months included. Documents keep input order within a chunk.
std::vector<TimeChunk> assign_chunks(std::span<const Document> documents);

struct ChunkedCorpus {
  Vocabulary vocabulary;
  std::vector<Document> documents;
  std::vector<TimeChunk> chunks;

  std::size_t token_count() const;
  std::size_t chunk_token_count(std::size_t chunk) const;
};

struct CorpusStats {
  std::size_t documents = 0;
  std::size_t tokens_kept = 0;
  std::size_t tokens_dropped_oov = 0;
};

/// Tokenizes, prunes the vocabulary and partitions into monthly chunks.
/// Throws CorpusError on duplicate ids or an empty vocabulary.
ChunkedCorpus build_corpus(std::span<const RawRecord> records,
                           const TokenizerRules& rules, std::uint64_t min_count,
                           CorpusStats* stats = nullptr,
                           unsigned threads = 1);

/// Bundle layout: vocab.tsv (id, word, count), docs.jsonl (id, date, text,
/// tokens), chunks.json (index, period, document ids).
void save_corpus(const ChunkedCorpus& corpus, const std::filesystem::path& dir);
ChunkedCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace narrshift
