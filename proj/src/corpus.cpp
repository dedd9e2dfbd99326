#include "narrshift/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "narrshift/util.hpp"

namespace narrshift {

using nlohmann::json;

namespace {

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return m == 2 && is_leap(y) ? 29 : kDays[m - 1];
}

bool parse_digits(std::string_view s, int& out) {
  for (char c : s)
    if (c < '0' || c > '9') return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

// --- UTF-8 ------------------------------------------------------------------

// Decodes one code point; invalid bytes decode as U+FFFD and consume 1 byte.
char32_t decode_utf8(std::string_view s, std::size_t& pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  auto cont = [&](std::size_t i) -> int {
    if (pos + i >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[pos + i]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++pos;
    return b0;
  }
  int len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++pos;
    return 0xFFFD;
  }
  for (int i = 1; i < len; ++i) {
    const int c = cont(i);
    if (c < 0) {
      ++pos;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  pos += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_digit_cp(char32_t cp) { return cp >= U'0' && cp <= U'9'; }

// Word characters: ASCII letters/digits and non-ASCII code points outside the
// common punctuation, symbol and space blocks.
bool is_word_cp(char32_t cp) {
  if (cp < 0x80)
    return (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z') ||
           is_digit_cp(cp);
  if (cp <= 0xBF) return false;                  // Latin-1 punctuation, NBSP
  if (cp == 0xD7 || cp == 0xF7) return false;    // x and division signs
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;  // punctuation, symbols
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  if (cp == 0xFEFF || cp == 0xFFFD) return false;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;  // emoji
  return true;
}

char32_t to_lower_cp(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 32;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;  // Latin-1
  if (cp >= 0x100 && cp <= 0x17F && cp != 0x130 && cp != 0x138 &&
      cp != 0x149 && cp != 0x17F) {
    // Latin Extended-A alternates upper/lower, with a parity flip at U+0139.
    const bool odd_upper = (cp >= 0x139 && cp <= 0x148) || cp >= 0x179;
    const bool upper = odd_upper ? (cp % 2 == 1) : (cp % 2 == 0);
    return upper ? cp + 1 : cp;
  }
  if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;  // Greek
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;                 // Cyrillic
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  return cp;
}

constexpr std::string_view kDefaultStopwords[] = {
    "about", "above", "after", "again", "against", "all", "also", "and",
    "any", "are", "because", "been", "before", "being", "below", "between",
    "both", "but", "can", "could", "did", "does", "doing", "down", "during",
    "each", "few", "for", "from", "further", "had", "has", "have", "having",
    "her", "here", "hers", "herself", "him", "himself", "his", "how", "into",
    "its", "itself", "just", "more", "most", "mrs", "much", "must", "myself",
    "nor", "not", "now", "off", "once", "only", "other", "our", "ours",
    "ourselves", "out", "over", "own", "said", "same", "says", "she", "should",
    "some", "such", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through",
    "too", "under", "until", "very", "was", "were", "what", "when", "where",
    "which", "while", "who", "whom", "why", "will", "with", "would", "year",
    "years", "you", "your", "yours", "yourself", "yourselves"};

}  // namespace

// --- dates ------------------------------------------------------------------

std::optional<Date> Date::parse(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  Date d;
  if (!parse_digits(text.substr(0, 4), d.year) ||
      !parse_digits(text.substr(5, 2), d.month) ||
      !parse_digits(text.substr(8, 2), d.day))
    return std::nullopt;
  if (d.month < 1 || d.month > 12) return std::nullopt;
  if (d.day < 1 || d.day > days_in_month(d.year, d.month)) return std::nullopt;
  return d;
}

std::string Date::to_string() const {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
  return buf;
}

std::string Month::label() const {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%02d/%04d", month, year);
  return buf;
}

int months_between(Month from, Month to) {
  return (to.year - from.year) * 12 + (to.month - from.month);
}

// --- ingest -----------------------------------------------------------------

IngestResult ingest_jsonl_stream(std::istream& in, IngestMode mode) {
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](std::string message) {
    if (mode == IngestMode::kStrict)
      throw CorpusError("line " + std::to_string(line_no) + ": " + message);
    result.skipped.push_back({line_no, std::move(message)});
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      fail("not a JSON object");
      continue;
    }
    const char* missing = nullptr;
    for (const char* field : {"id", "date", "text"})
      if (!obj.contains(field) || !obj[field].is_string()) {
        missing = field;
        break;
      }
    if (missing) {
      fail(std::string("missing or non-string field '") + missing + "'");
      continue;
    }
    const auto date_text = obj["date"].get<std::string>();
    const auto date = Date::parse(date_text);
    if (!date) {
      fail("bad date '" + date_text + "'");
      continue;
    }
    result.records.push_back({obj["id"].get<std::string>(), *date,
                              obj["text"].get<std::string>()});
  }
  return result;
}

IngestResult ingest_jsonl(const std::filesystem::path& path, IngestMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("cannot open " + path.string());
  return ingest_jsonl_stream(in, mode);
}

// --- tokenizer --------------------------------------------------------------

TokenizerRules TokenizerRules::defaults() {
  TokenizerRules rules;
  for (auto w : kDefaultStopwords) rules.stopwords.emplace(w);
  return rules;
}

std::set<std::string, std::less<>> TokenizerRules::read_stopwords(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open stopword file " + path.string());
  std::set<std::string, std::less<>> words;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    words.emplace(line.substr(b, e - b + 1));
  }
  return words;
}

std::vector<std::string> tokenize(std::string_view raw_text,
                                  const TokenizerRules& rules) {
  std::vector<std::string> out;
  std::string current;
  std::size_t length = 0;
  bool all_digits = true;
  auto flush = [&] {
    if (length == 0) return;
    const bool keep = length >= rules.min_length &&
                      !(rules.strip_numeric && all_digits) &&
                      !rules.stopwords.contains(current);
    if (keep) out.push_back(current);
    current.clear();
    length = 0;
    all_digits = true;
  };
  std::size_t pos = 0;
  while (pos < raw_text.size()) {
    char32_t cp = decode_utf8(raw_text, pos);
    if (!is_word_cp(cp)) {
      flush();
      continue;
    }
    if (rules.lowercase) cp = to_lower_cp(cp);
    all_digits = all_digits && is_digit_cp(cp);
    append_utf8(current, cp);
    ++length;
  }
  flush();
  return out;
}

// --- vocabulary -------------------------------------------------------------

Vocabulary::Vocabulary(std::vector<std::string> words,
                       std::vector<std::uint64_t> counts)
    : words_(std::move(words)), counts_(std::move(counts)) {
  if (words_.size() != counts_.size())
    throw CorpusError("vocabulary words/counts length mismatch");
  index_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i)
    if (!index_.emplace(words_[i], static_cast<WordId>(i)).second)
      throw CorpusError("duplicate vocabulary word '" + words_[i] + "'");
}

std::optional<WordId> Vocabulary::find(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& w : words_) {
    h = fnv1a64(w, h);
    h = fnv1a64(std::string_view("\n", 1), h);
  }
  return h;
}

Vocabulary build_vocabulary(
    std::span<const std::vector<std::string>> token_streams,
    std::uint64_t min_count) {
  if (min_count == 0) throw CorpusError("min_count must be >= 1");
  std::unordered_map<std::string, std::uint64_t> freq;
  for (const auto& stream : token_streams)
    for (const auto& tok : stream) ++freq[tok];
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [word, n] : freq)
    if (n >= min_count) kept.emplace_back(word, n);
  if (kept.empty())
    throw CorpusError("no word reaches min_count " + std::to_string(min_count) +
                      "; corpus unusable");
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> words;
  std::vector<std::uint64_t> counts;
  words.reserve(kept.size());
  counts.reserve(kept.size());
  for (auto& [w, n] : kept) {
    words.push_back(std::move(w));
    counts.push_back(n);
  }
  return Vocabulary(std::move(words), std::move(counts));
}

// --- chunks -----------------------------------------------------------------

std::vector<TimeChunk> assign_chunks(std::span<const Document> documents) {
  if (documents.empty()) return {};
  Month lo = Month::of(documents.front().date);
  Month hi = lo;
  for (const auto& d : documents) {
    lo = std::min(lo, Month::of(d.date));
    hi = std::max(hi, Month::of(d.date));
  }
  std::vector<TimeChunk> chunks(static_cast<std::size_t>(months_between(lo, hi)) + 1);
  Month m = lo;
  for (std::size_t i = 0; i < chunks.size(); ++i, m = m.next()) {
    chunks[i].index = i;
    chunks[i].period = m;
  }
  for (std::size_t i = 0; i < documents.size(); ++i)
    chunks[months_between(lo, Month::of(documents[i].date))].documents.push_back(i);
  return chunks;
}

std::size_t ChunkedCorpus::token_count() const {
  std::size_t n = 0;
  for (const auto& d : documents) n += d.tokens.size();
  return n;
}

std::size_t ChunkedCorpus::chunk_token_count(std::size_t chunk) const {
  std::size_t n = 0;
  for (auto i : chunks.at(chunk).documents) n += documents[i].tokens.size();
  return n;
}

ChunkedCorpus build_corpus(std::span<const RawRecord> records,
                           const TokenizerRules& rules, std::uint64_t min_count,
                           CorpusStats* stats, unsigned threads) {
  {
    std::unordered_map<std::string_view, std::size_t> seen;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (!seen.emplace(records[i].id, i).second)
        throw CorpusError("duplicate document id '" + records[i].id + "'");
  }
  std::vector<std::vector<std::string>> streams(records.size());
  parallel_for(records.size(), threads,
               [&](std::size_t i) { streams[i] = tokenize(records[i].text, rules); });

  ChunkedCorpus corpus;
  corpus.vocabulary = build_vocabulary(streams, min_count);
  CorpusStats local;
  corpus.documents.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    Document doc{records[i].id, records[i].date, records[i].text, {}};
    doc.tokens.reserve(streams[i].size());
    for (const auto& tok : streams[i]) {
      if (auto id = corpus.vocabulary.find(tok)) {
        doc.tokens.push_back(*id);
        ++local.tokens_kept;
      } else {
        ++local.tokens_dropped_oov;
      }
    }
    corpus.documents.push_back(std::move(doc));
  }
  local.documents = corpus.documents.size();
  corpus.chunks = assign_chunks(corpus.documents);
  if (stats) *stats = local;
  return corpus;
}

// --- bundle I/O -------------------------------------------------------------

void save_corpus(const ChunkedCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream vocab;
  vocab << "id\tword\tcount\n";
  for (std::size_t i = 0; i < corpus.vocabulary.size(); ++i)
    vocab << i << '\t' << corpus.vocabulary.word(static_cast<WordId>(i)) << '\t'
          << corpus.vocabulary.count(static_cast<WordId>(i)) << '\n';
  write_file(dir / "vocab.tsv", vocab.str());

  std::string docs;
  for (const auto& d : corpus.documents) {
    json j = {{"id", d.id},
              {"date", d.date.to_string()},
              {"text", d.raw_text},
              {"tokens", d.tokens}};
    docs += j.dump();
    docs += '\n';
  }
  write_file(dir / "docs.jsonl", docs);

  json chunks = json::array();
  for (const auto& c : corpus.chunks) {
    json ids = json::array();
    for (auto i : c.documents) ids.push_back(corpus.documents[i].id);
    chunks.push_back({{"index", c.index},
                      {"period_start", c.period.first_day().to_string()},
                      {"period_end", c.period.next().first_day().to_string()},
                      {"documents", std::move(ids)}});
  }
  write_file(dir / "chunks.json", chunks.dump(1) + "\n");
}

ChunkedCorpus load_corpus(const std::filesystem::path& dir) {
  ChunkedCorpus corpus;
  {
    std::istringstream in(read_file(dir / "vocab.tsv"));
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::string> words;
    std::vector<std::uint64_t> counts;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto t1 = line.find('\t');
      const auto t2 = line.find('\t', t1 + 1);
      if (t1 == std::string::npos || t2 == std::string::npos)
        throw CorpusError("malformed vocab.tsv line: " + line);
      if (std::stoull(line.substr(0, t1)) != words.size())
        throw CorpusError("vocab.tsv ids are not dense");
      words.push_back(line.substr(t1 + 1, t2 - t1 - 1));
      counts.push_back(std::stoull(line.substr(t2 + 1)));
    }
    corpus.vocabulary = Vocabulary(std::move(words), std::move(counts));
  }
  {
    std::istringstream in(read_file(dir / "docs.jsonl"));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      const auto date = Date::parse(j.at("date").get<std::string>());
      if (!date) throw CorpusError("bad date in docs.jsonl");
      Document d{j.at("id").get<std::string>(), *date,
                 j.at("text").get<std::string>(),
                 j.at("tokens").get<std::vector<WordId>>()};
      for (auto t : d.tokens)
        if (t >= corpus.vocabulary.size())
          throw CorpusError("token id out of vocabulary in document " + d.id);
      corpus.documents.push_back(std::move(d));
    }
  }
  corpus.chunks = assign_chunks(corpus.documents);
  return corpus;
}

}  // namespace narrshift
