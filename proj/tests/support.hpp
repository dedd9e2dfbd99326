#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "narrshift/corpus.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("narrshift-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline narrshift::RawRecord record(std::string id, std::string date, std::string text) {
  return {std::move(id), *narrshift::Date::parse(date), std::move(text)};
}

/// A corpus whose vocabulary is exactly `words` (ids in that order) and whose
/// documents are the given id sequences, all in one chunk.
inline narrshift::ChunkedCorpus make_corpus(std::vector<std::string> words,
                                            std::vector<std::vector<narrshift::WordId>> docs,
                                            narrshift::Month month = {2020, 1}) {
  narrshift::ChunkedCorpus c;
  c.vocabulary = narrshift::Vocabulary(words, std::vector<std::uint64_t>(words.size(), 1));
  for (std::size_t d = 0; d < docs.size(); ++d) {
    narrshift::Document doc;
    doc.id = "d" + std::to_string(d);
    doc.date = month.first_day();
    doc.tokens = std::move(docs[d]);
    c.documents.push_back(std::move(doc));
  }
  c.chunks = narrshift::assign_chunks(c.documents);
  return c;
}

}  // namespace testing
