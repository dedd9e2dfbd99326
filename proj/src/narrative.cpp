#include "narrshift/narrative.hpp"

#include <algorithm>
#include <map>
#include <semaphore>
#include <thread>

#include "httplib.h"
#include "narrshift/resources.hpp"
#include "narrshift/util.hpp"

namespace narrshift {

using nlohmann::json;

// --- dossier ----------------------------------------------------------------

namespace {

bool earlier_doc(const Document& a, const Document& b) {
  return a.date != b.date ? a.date < b.date : a.id < b.id;
}

std::vector<std::string> snapshot_top_words(const ChunkTopicSnapshot& snap, TopicId k,
                                            const Vocabulary& vocab, std::size_t n) {
  if (k >= snap.topics.size()) return {};
  auto cells = snap.topics[k];
  std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < cells.size() && i < n; ++i) out.push_back(vocab.word(cells[i].first));
  return out;
}

}  // namespace

std::vector<std::size_t> filter_documents(const ChunkedCorpus& corpus, std::size_t t,
                                          std::span<const WordId> impact_words,
                                          std::size_t n) {
  if (n < 1) throw std::invalid_argument("filter_documents needs n >= 1");
  std::vector<std::pair<std::size_t, std::uint64_t>> scored;
  for (auto d : corpus.chunks.at(t).documents) {
    std::uint64_t score = 0;
    for (auto w : corpus.documents[d].tokens)
      score += static_cast<std::uint64_t>(
          std::count(impact_words.begin(), impact_words.end(), w));
    if (score > 0) scored.emplace_back(d, score);
  }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return earlier_doc(corpus.documents[a.first], corpus.documents[b.first]);
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scored.size() && i < n; ++i) out.push_back(scored[i].first);
  return out;
}

std::vector<std::size_t> filter_by_topic_share(
    const ChunkedCorpus& corpus, std::span<const std::vector<std::uint32_t>> doc_topics,
    TopicId k, std::size_t t, std::size_t n) {
  if (n < 1) throw std::invalid_argument("filter_by_topic_share needs n >= 1");
  std::vector<std::pair<std::size_t, double>> scored;
  for (std::size_t c = t > 0 ? t - 1 : 0; c <= t; ++c)
    for (auto d : corpus.chunks.at(c).documents) {
      const auto& counts = doc_topics[d];
      const auto len = corpus.documents[d].tokens.size();
      if (counts.size() <= k || len == 0 || counts[k] == 0) continue;
      scored.emplace_back(d, static_cast<double>(counts[k]) / static_cast<double>(len));
    }
  std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return earlier_doc(corpus.documents[a.first], corpus.documents[b.first]);
  });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scored.size() && i < n; ++i) out.push_back(scored[i].first);
  return out;
}

std::string long_month_label(Month m) {
  static constexpr const char* kNames[] = {"January", "February", "March",     "April",
                                           "May",     "June",     "July",      "August",
                                           "September", "October", "November", "December"};
  return std::string(kNames[m.month - 1]) + " " + std::to_string(m.year);
}

ChangeDossier build_dossier(const ChunkedCorpus& corpus,
                            std::span<const ChunkTopicSnapshot> snapshots,
                            const ChangeEvent& change, const DossierOptions& options,
                            std::span<const std::vector<std::uint32_t>> doc_topics) {
  const auto t = change.chunk;
  ChangeDossier d;
  d.change = change;
  d.date_label = long_month_label(corpus.chunks.at(t).period);
  if (t > 0)
    d.topwords_before =
        snapshot_top_words(snapshots[t - 1], change.topic, corpus.vocabulary, options.top_words);
  d.topwords_after =
      snapshot_top_words(snapshots[t], change.topic, corpus.vocabulary, options.top_words);
  std::vector<WordId> impact_ids;
  for (const auto& w : change.impacts) {
    d.impact_words.push_back(corpus.vocabulary.word(w.word));
    impact_ids.push_back(w.word);
  }
  std::vector<std::size_t> picked;
  if (options.strategy == FilterStrategy::kTopicShare) {
    if (doc_topics.size() != corpus.documents.size())
      throw std::invalid_argument("topic-share filtering needs the doc-topic table");
    picked = filter_by_topic_share(corpus, doc_topics, change.topic, t, options.articles);
  } else {
    picked = filter_documents(corpus, t, impact_ids, options.articles);
  }
  for (auto i : picked) {
    const auto& doc = corpus.documents[i];
    d.articles.push_back({doc.id, doc.date, doc.raw_text});
  }
  d.no_evidence = d.articles.empty();
  return d;
}

json ChangeDossier::to_json() const {
  json articles_j = json::array();
  for (const auto& a : articles)
    articles_j.push_back({{"id", a.id}, {"date", a.date.to_string()}, {"text", a.text}});
  return {{"topic", change.topic},
          {"chunk", change.chunk},
          {"date", date_label},
          {"similarity", change.similarity},
          {"threshold", change.threshold},
          {"topwords_before", topwords_before},
          {"topwords_after", topwords_after},
          {"impact_words", impact_words},
          {"articles", std::move(articles_j)},
          {"no_evidence", no_evidence}};
}

// --- prompt -----------------------------------------------------------------

std::size_t estimate_tokens(std::string_view text) {
  std::size_t code_points = 0;
  for (char c : text)
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++code_points;
  return (code_points + 3) / 4;
}

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  for (auto p : {kDate, kTopBefore, kTopAfter, kImpacts, kArticles})
    if (text_.find(p) == std::string::npos)
      throw std::invalid_argument("prompt template lacks placeholder " + std::string(p));
  if (text_.empty() || text_.back() != '\n') text_ += '\n';
  version_ = hex64(fnv1a64(text_));
}

PromptTemplate PromptTemplate::bundled() {
  return PromptTemplate(std::string(resource("prompt_template_v1.txt")));
}

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

std::string join(const std::vector<std::string>& words) {
  if (words.empty()) return "(none)";
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ", ";
    out += w;
  }
  return out;
}

constexpr std::string_view kTruncatedMarker = " [truncated]";

std::string article_header(std::size_t i, const Article& a) {
  return "\nARTICLE " + std::to_string(i + 1) + " (" + a.date.to_string() + "):\n";
}

// Longest prefix of `text` that fits: sentence boundaries first, then word
// boundaries, then nothing. nullopt when not even the header fits.
std::optional<std::string> truncate_block(const std::string& header, const std::string& text,
                                          std::size_t budget) {
  auto fits = [&](std::size_t cut) {
    std::string candidate = header + text.substr(0, cut) + std::string(kTruncatedMarker);
    return estimate_tokens(candidate) <= budget;
  };
  std::vector<std::size_t> sentence_cuts, word_cuts;
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    const bool space_next = std::isspace(static_cast<unsigned char>(text[i + 1]));
    if (!space_next) continue;
    if (text[i] == '.' || text[i] == '!' || text[i] == '?') sentence_cuts.push_back(i + 1);
    if (!std::isspace(static_cast<unsigned char>(text[i]))) word_cuts.push_back(i + 1);
  }
  for (auto it = sentence_cuts.rbegin(); it != sentence_cuts.rend(); ++it)
    if (fits(*it)) return header + text.substr(0, *it) + std::string(kTruncatedMarker);
  for (auto it = word_cuts.rbegin(); it != word_cuts.rend(); ++it)
    if (fits(*it)) return header + text.substr(0, *it) + std::string(kTruncatedMarker);
  if (fits(0)) return header + std::string(kTruncatedMarker.substr(1));
  return std::nullopt;
}

std::string render_lines(const std::string& tmpl, const ChangeDossier& d,
                         const std::string& articles_section, bool split_roles,
                         std::string* system_out) {
  std::string system, user;
  std::size_t start = 0;
  while (start < tmpl.size()) {
    auto end = tmpl.find('\n', start);
    if (end == std::string::npos) end = tmpl.size() - 1;
    std::string line = tmpl.substr(start, end - start + 1);
    start = end + 1;
    const bool has_placeholder = line.find('[') != std::string::npos &&
                                 (line.find(PromptTemplate::kDate) != std::string::npos ||
                                  line.find(PromptTemplate::kTopBefore) != std::string::npos ||
                                  line.find(PromptTemplate::kTopAfter) != std::string::npos ||
                                  line.find(PromptTemplate::kImpacts) != std::string::npos ||
                                  line.find(PromptTemplate::kArticles) != std::string::npos);
    if (has_placeholder) {
      replace_all(line, PromptTemplate::kDate, d.date_label);
      replace_all(line, PromptTemplate::kTopBefore, join(d.topwords_before));
      replace_all(line, PromptTemplate::kTopAfter, join(d.topwords_after));
      replace_all(line, PromptTemplate::kImpacts, join(d.impact_words));
      replace_all(line, PromptTemplate::kArticles, articles_section);
    }
    (split_roles && !has_placeholder ? system : user) += line;
  }
  if (system_out) *system_out = std::move(system);
  return user;
}

}  // namespace

RenderedPrompt build_prompt(const ChangeDossier& dossier, const PromptTemplate& tmpl,
                            std::size_t token_budget, bool split_roles) {
  RenderedPrompt out;
  std::string system;
  const std::string empty_user = render_lines(tmpl.text(), dossier, "", split_roles, &system);
  out.fixed_tokens = estimate_tokens(system) + estimate_tokens(empty_user);
  if (out.fixed_tokens > token_budget)
    throw PromptBudgetError("prompt needs " + std::to_string(out.fixed_tokens) +
                            " tokens before any article; budget is " +
                            std::to_string(token_budget));

  std::string section;
  if (dossier.articles.empty()) {
    section = "(none)";
  } else {
    out.per_article_budget = (token_budget - out.fixed_tokens) / dossier.articles.size();
    for (std::size_t i = 0; i < dossier.articles.size(); ++i) {
      const auto& a = dossier.articles[i];
      const auto header = article_header(i, a);
      std::string block = header + a.text;
      bool cut = false;
      if (estimate_tokens(block) > out.per_article_budget) {
        auto shortened = truncate_block(header, a.text, out.per_article_budget);
        if (!shortened)
          throw PromptBudgetError("article " + a.id + " does not fit its " +
                                  std::to_string(out.per_article_budget) + "-token share");
        block = std::move(*shortened);
        cut = true;
      }
      out.article_blocks.push_back(block);
      out.truncated.push_back(cut);
      section += block;
    }
  }
  if (dossier.articles.empty() &&
      out.fixed_tokens + estimate_tokens(section) > token_budget)
    throw PromptBudgetError("prompt exceeds the token budget");
  out.user = render_lines(tmpl.text(), dossier, section, split_roles, &out.system);
  return out;
}

// --- endpoint ---------------------------------------------------------------

void EndpointConfig::validate() const {
  if (!(temperature >= 0.0)) throw ConfigError("endpoint.temperature must be >= 0");
  if (base_url.empty()) throw ConfigError("endpoint.base_url is empty");
  if (max_in_flight < 1) throw ConfigError("endpoint.max_in_flight must be >= 1");
  if (max_tokens < 1) throw ConfigError("endpoint.max_tokens must be >= 1");
}

json chat_request_body(std::span<const ChatMessage> messages, const EndpointConfig& config) {
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", config.model},
          {"messages", std::move(msgs)},
          {"temperature", config.temperature},
          {"max_tokens", config.max_tokens}};
}

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host:port
  std::string path;    // without trailing slash
};

ParsedUrl parse_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw EndpointError("endpoint URL lacks a scheme: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http")
    throw EndpointError("unsupported endpoint scheme '" + scheme + "' (only http is built in)");
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl p;
  p.origin = url.substr(0, path_start);
  p.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!p.path.empty() && p.path.back() == '/') p.path.pop_back();
  return p;
}

}  // namespace

std::string call_endpoint(std::span<const ChatMessage> messages, const EndpointConfig& config) {
  config.validate();
  const auto url = parse_base_url(config.base_url);
  const std::string body = chat_request_body(messages, config).dump();
  httplib::Headers headers;
  if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);

  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  std::string last_error;
  auto delay = config.backoff;
  for (std::uint32_t attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    auto res = client.Post(url.path + "/chat/completions", headers, body, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw EndpointError("HTTP " + std::to_string(res->status) + ": " + res->body, res->status,
                          res->body);
    const json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw EndpointError("endpoint returned non-JSON body", res->status, res->body);
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw EndpointError("response lacks choices[0].message.content", res->status, res->body);
    }
  }
  throw EndpointError("endpoint unavailable after " + std::to_string(config.max_retries + 1) +
                      " attempts; last error: " + last_error);
}

std::vector<ChatMessage> prompt_messages(const RenderedPrompt& prompt) {
  std::vector<ChatMessage> out;
  if (!prompt.system.empty()) out.push_back({"system", prompt.system});
  out.push_back({"user", prompt.user});
  return out;
}

// --- analysis ---------------------------------------------------------------

std::optional<std::string_view> extract_json_object(std::string_view raw) {
  const auto start = raw.find('{');
  if (start == std::string_view::npos) return std::nullopt;
  int depth = 0;
  bool in_string = false, escaped = false;
  for (std::size_t i = start; i < raw.size(); ++i) {
    const char c = raw[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return raw.substr(start, i - start + 1);
  }
  return std::nullopt;
}

namespace {

// Python-style literals outside strings become JSON literals.
std::string normalize_literals(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_string = false, escaped = false;
  auto is_ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      out += c;
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
      out += c;
      continue;
    }
    bool replaced = false;
    for (auto [from, to] : {std::pair<std::string_view, std::string_view>{"True", "true"},
                            {"False", "false"},
                            {"None", "null"}}) {
      if (text.substr(i, from.size()) == from && (i == 0 || !is_ident(text[i - 1])) &&
          (i + from.size() >= text.size() || !is_ident(text[i + from.size()]))) {
        out += to;
        i += from.size() - 1;
        replaced = true;
        break;
      }
    }
    if (!replaced) out += c;
  }
  return out;
}

std::optional<std::string> non_empty_string(const json& j) {
  if (!j.is_string()) return std::nullopt;
  auto s = j.get<std::string>();
  if (s.find_first_not_of(" \t\r\n") == std::string::npos) return std::nullopt;
  return s;
}

}  // namespace

ParseResult parse_analysis(std::string_view raw, std::size_t article_count) {
  ParseResult result;
  auto& v = result.violations;
  const auto object_text = extract_json_object(raw);
  if (!object_text) {
    v.push_back("no JSON object found in the answer");
    return result;
  }
  const json j = json::parse(normalize_literals(*object_text), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    v.push_back("the answer is not valid JSON");
    return result;
  }

  NarrativeAnalysis a;
  if (!j.contains("summaries") || !j["summaries"].is_array()) {
    v.push_back("summaries: missing or not a list");
  } else {
    const auto& s = j["summaries"];
    if (s.size() != article_count)
      v.push_back("summaries: expected " + std::to_string(article_count) + " entries, got " +
                  std::to_string(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) {
      const json* value = &s[i];
      if (s[i].is_object() && s[i].size() == 1) value = &s[i].begin().value();
      if (auto text = non_empty_string(*value)) a.summaries.push_back(*text);
      else v.push_back("summaries[" + std::to_string(i) + "]: expected one non-empty sentence");
    }
  }
  for (auto [key, field] : {std::pair<const char*, std::string*>{"topic_change", &a.topic_change},
                            {"narrative_before", &a.narrative_before},
                            {"narrative_after", &a.narrative_after}}) {
    if (!j.contains(key)) v.push_back(std::string(key) + ": missing");
    else if (auto text = non_empty_string(j[key])) *field = *text;
    else v.push_back(std::string(key) + ": expected a non-empty string");
  }

  std::map<std::string, const json*> criteria;
  if (!j.contains("narrative_criteria")) {
    v.push_back("narrative_criteria: missing");
  } else if (const auto& c = j["narrative_criteria"]; c.is_array()) {
    for (const auto& item : c)
      if (item.is_object())
        for (auto it = item.begin(); it != item.end(); ++it) criteria[it.key()] = &it.value();
  } else if (c.is_object()) {
    for (auto it = c.begin(); it != c.end(); ++it) criteria[it.key()] = &it.value();
  } else {
    v.push_back("narrative_criteria: expected a list or an object");
  }
  if (j.contains("narrative_criteria"))
    for (auto [key, field] : {std::pair<const char*, std::string*>{"setting", &a.setting},
                              {"characters", &a.characters},
                              {"plot", &a.plot},
                              {"moral", &a.moral}}) {
      auto it = criteria.find(key);
      if (it == criteria.end()) v.push_back(std::string("narrative_criteria.") + key + ": missing");
      else if (auto text = non_empty_string(*it->second)) *field = *text;
      else v.push_back(std::string("narrative_criteria.") + key + ": expected a non-empty string");
    }

  const json* verdict = nullptr;
  if (j.contains("true_narrative")) verdict = &j["true_narrative"];
  else if (j.contains("true narrative")) verdict = &j["true narrative"];
  if (!verdict) {
    v.push_back("true_narrative: missing");
  } else if (verdict->is_boolean()) {
    a.true_narrative = verdict->get<bool>();
  } else if (verdict->is_string() && (*verdict == "True" || *verdict == "true")) {
    a.true_narrative = true;
  } else if (verdict->is_string() && (*verdict == "False" || *verdict == "false")) {
    a.true_narrative = false;
  } else {
    v.push_back("true_narrative: expected true or false");
  }

  if (v.empty()) result.analysis = std::move(a);
  return result;
}

json NarrativeAnalysis::to_json() const {
  json s = json::array();
  for (std::size_t i = 0; i < summaries.size(); ++i)
    s.push_back({{"article_" + std::to_string(i + 1), summaries[i]}});
  return {{"summaries", std::move(s)},
          {"topic_change", topic_change},
          {"narrative_before", narrative_before},
          {"narrative_after", narrative_after},
          {"narrative_criteria",
           json::array({{{"setting", setting}},
                        {{"characters", characters}},
                        {{"plot", plot}},
                        {{"moral", moral}}})},
          {"true_narrative", true_narrative}};
}

std::string repair_message(std::span<const std::string> violations) {
  std::string msg =
      "Your previous answer could not be used. Fix these problems and answer again with the "
      "complete JSON object only:\n";
  for (const auto& v : violations) msg += "- " + v + "\n";
  return msg;
}

std::string_view to_string(ExplainStatus status) {
  switch (status) {
    case ExplainStatus::kOk: return "ok";
    case ExplainStatus::kParseFailure: return "parse_failure";
    case ExplainStatus::kNoEvidence: return "no_evidence";
    case ExplainStatus::kEndpointFailure: return "endpoint_failure";
  }
  return "unknown";
}

ExplainResult explain_change(const ChangeDossier& dossier, const PromptTemplate& tmpl,
                             const EndpointConfig& config) {
  ExplainResult result;
  result.prompt = build_prompt(dossier, tmpl, config.context_budget, config.split_roles);
  if (dossier.no_evidence) {
    result.status = ExplainStatus::kNoEvidence;
    return result;
  }
  auto messages = prompt_messages(result.prompt);
  for (std::uint32_t attempt = 0;; ++attempt) {
    std::string raw;
    try {
      raw = call_endpoint(messages, config);
    } catch (const EndpointError& e) {
      result.status = ExplainStatus::kEndpointFailure;
      result.error = e.what();
      return result;
    }
    result.responses.push_back(raw);
    auto parsed = parse_analysis(raw, dossier.articles.size());
    if (parsed.ok()) {
      result.status = ExplainStatus::kOk;
      result.analysis = std::move(parsed.analysis);
      result.violations.clear();
      return result;
    }
    result.violations = std::move(parsed.violations);
    if (attempt >= config.repair_retries) {
      result.status = ExplainStatus::kParseFailure;
      return result;
    }
    messages.push_back({"assistant", raw});
    messages.push_back({"user", repair_message(result.violations)});
  }
}

std::vector<ExplainResult> explain_all(std::span<const ChangeDossier> dossiers,
                                       const PromptTemplate& tmpl, const EndpointConfig& config,
                                       unsigned threads) {
  config.validate();
  std::vector<ExplainResult> results(dossiers.size());
  std::counting_semaphore<1024> in_flight(
      static_cast<std::ptrdiff_t>(std::min<std::size_t>(config.max_in_flight, 1024)));
  parallel_for(dossiers.size(), threads, [&](std::size_t i) {
    in_flight.acquire();
    try {
      results[i] = explain_change(dossiers[i], tmpl, config);
    } catch (...) {
      in_flight.release();
      throw;
    }
    in_flight.release();
  });
  return results;
}

json analysis_record(const ChangeDossier& dossier, const ExplainResult& result) {
  json messages = json::array();
  for (const auto& m : prompt_messages(result.prompt))
    messages.push_back({{"role", m.role}, {"content", m.content}});
  return {{"dossier", dossier.to_json()},
          {"prompt", std::move(messages)},
          {"responses", result.responses},
          {"analysis", result.analysis ? result.analysis->to_json() : json(nullptr)},
          {"status", std::string(to_string(result.status))},
          {"violations", result.violations},
          {"error", result.error}};
}

}  // namespace narrshift
