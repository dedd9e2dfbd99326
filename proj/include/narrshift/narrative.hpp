#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "narrshift/change_detect.hpp"
#include "narrshift/corpus.hpp"
#include "narrshift/rolling.hpp"

namespace narrshift {

// --- dossier ----------------------------------------------------------------

struct Article {
  std::string id;
  Date date;
  std::string text;
};

struct ChangeDossier {
  ChangeEvent change;
  std::string date_label;                   // "October 2014"
  std::vector<std::string> topwords_before;  // chunk t - 1, at most 10
  std::vector<std::string> topwords_after;   // chunk t, at most 10
  std::vector<std::string> impact_words;
  std::vector<Article> articles;             // all from chunk t
  bool no_evidence = false;                  // no document mentions an impact word

  nlohmann::json to_json() const;
};

/// Scores each document by the total occurrences of `impact_words` among its
/// tokens and returns the top n positions (into corpus.documents) by score,
/// ties by earlier date then id. Zero-score documents are never returned.
/// Only documents of chunk t are considered.
std::vector<std::size_t> filter_documents(const ChunkedCorpus& corpus, std::size_t t,
                                          std::span<const WordId> impact_words,
                                          std::size_t n);

/// Alternative strategy: documents of chunks t - 1 and t with the highest
/// share of topic k (doc_topics[d][k] / length), ties by date then id.
std::vector<std::size_t> filter_by_topic_share(
    const ChunkedCorpus& corpus, std::span<const std::vector<std::uint32_t>> doc_topics,
    TopicId k, std::size_t t, std::size_t n);

enum class FilterStrategy { kImpactWords, kTopicShare };

struct DossierOptions {
  std::size_t articles = 5;
  std::size_t top_words = 10;
  FilterStrategy strategy = FilterStrategy::kImpactWords;
};

std::string long_month_label(Month m);

ChangeDossier build_dossier(const ChunkedCorpus& corpus,
                            std::span<const ChunkTopicSnapshot> snapshots,
                            const ChangeEvent& change, const DossierOptions& options = {},
                            std::span<const std::vector<std::uint32_t>> doc_topics = {});

// --- prompt -----------------------------------------------------------------

class PromptBudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Heuristic token count: UTF-8 code points / 4, rounded up.
std::size_t estimate_tokens(std::string_view text);

/// The instruction template, one "##" paragraph per line, with placeholders
/// [date], [10 top words before], [10 top words after],
/// [leave-one-out word impacts] and [Filtered articles].
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string text);
  /// The bundled template (resources/prompt_template_v1.txt).
  static PromptTemplate bundled();

  const std::string& text() const { return text_; }
  const std::string& version() const { return version_; }

  static constexpr std::string_view kDate = "[date]";
  static constexpr std::string_view kTopBefore = "[10 top words before]";
  static constexpr std::string_view kTopAfter = "[10 top words after]";
  static constexpr std::string_view kImpacts = "[leave-one-out word impacts]";
  static constexpr std::string_view kArticles = "[Filtered articles]";

 private:
  std::string text_;
  std::string version_;
};

struct RenderedPrompt {
  std::string system;  // instruction paragraphs (empty in single-block mode)
  std::string user;    // data paragraphs, or everything in single-block mode
  std::size_t fixed_tokens = 0;        // prompt with an empty article section
  std::size_t per_article_budget = 0;  // 0 when there are no articles
  std::vector<std::string> article_blocks;
  std::vector<bool> truncated;

  std::string full() const { return system.empty() ? user : system + user; }
};

/// Substitutes the dossier into the template. Article blocks are cut at
/// sentence boundaries so each fits (budget - fixed_tokens) / n_articles,
/// with "[truncated]" noted inline. Throws PromptBudgetError when the prompt
/// cannot fit even with maximal truncation.
RenderedPrompt build_prompt(const ChangeDossier& dossier, const PromptTemplate& tmpl,
                            std::size_t token_budget, bool split_roles = true);

// --- endpoint ---------------------------------------------------------------

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8080/v1";
  std::string model = "llama-3.1-8b-instruct";
  double temperature = 0.0;
  std::uint32_t max_tokens = 2048;
  std::chrono::milliseconds timeout{120000};
  std::uint32_t max_retries = 3;     // transport/5xx retries per call
  std::uint32_t repair_retries = 3;  // re-asks after an invalid answer
  std::size_t context_budget = 8000;
  std::chrono::milliseconds backoff{500};  // doubled after every retry
  std::string api_key_env = "NARRSHIFT_API_KEY";
  bool split_roles = true;
  std::size_t max_in_flight = 1;

  void validate() const;
};

class EndpointError : public std::runtime_error {
 public:
  EndpointError(const std::string& what, int status = 0, std::string body = {})
      : std::runtime_error(what), status_(status), body_(std::move(body)) {}
  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};

struct ChatMessage {
  std::string role;
  std::string content;
};

/// OpenAI-compatible request body: model, messages, temperature, max_tokens.
nlohmann::json chat_request_body(std::span<const ChatMessage> messages,
                                 const EndpointConfig& config);

/// POSTs to <base_url>/chat/completions and returns
/// choices[0].message.content verbatim. Network failures, timeouts, 429 and
/// 5xx are retried up to max_retries times with exponential backoff; other
/// HTTP errors throw immediately with the response body attached.
std::string call_endpoint(std::span<const ChatMessage> messages, const EndpointConfig& config);

std::vector<ChatMessage> prompt_messages(const RenderedPrompt& prompt);

// --- analysis ---------------------------------------------------------------

struct NarrativeAnalysis {
  std::vector<std::string> summaries;
  std::string topic_change;
  std::string narrative_before;
  std::string narrative_after;
  std::string setting;
  std::string characters;
  std::string plot;
  std::string moral;
  bool true_narrative = false;

  nlohmann::json to_json() const;
  bool operator==(const NarrativeAnalysis&) const = default;
};

/// Either a valid analysis or the list of violations found.
struct ParseResult {
  std::optional<NarrativeAnalysis> analysis;
  std::vector<std::string> violations;

  bool ok() const { return analysis.has_value(); }
};

/// First balanced top-level {...} in `raw`, ignoring braces inside strings.
std::optional<std::string_view> extract_json_object(std::string_view raw);

/// Extracts and validates the answer. Accepts criteria as a list of
/// single-key objects or as one object, summaries as strings or single-key
/// objects, and "true narrative"/"true_narrative" as a boolean or a
/// "True"/"False" string (bare True/False are also read).
ParseResult parse_analysis(std::string_view raw, std::size_t article_count);

std::string repair_message(std::span<const std::string> violations);

enum class ExplainStatus { kOk, kParseFailure, kNoEvidence, kEndpointFailure };
std::string_view to_string(ExplainStatus status);

struct ExplainResult {
  ExplainStatus status = ExplainStatus::kOk;
  std::optional<NarrativeAnalysis> analysis;
  std::vector<std::string> responses;  // every raw answer, for audit
  std::vector<std::string> violations;  // of the last answer
  std::string error;                    // endpoint failure message
  RenderedPrompt prompt;
};

/// Renders, calls and parses; invalid answers are re-asked up to
/// config.repair_retries times with the violations quoted. Dossiers without
/// evidence are not sent.
ExplainResult explain_change(const ChangeDossier& dossier, const PromptTemplate& tmpl,
                             const EndpointConfig& config);

/// explain_change for every dossier with at most config.max_in_flight calls
/// in progress. Results are index-aligned with the input.
std::vector<ExplainResult> explain_all(std::span<const ChangeDossier> dossiers,
                                       const PromptTemplate& tmpl, const EndpointConfig& config,
                                       unsigned threads = 1);

/// analyses/<topic>_<chunk>.json payload.
nlohmann::json analysis_record(const ChangeDossier& dossier, const ExplainResult& result);

}  // namespace narrshift
