#include "narrshift/config.hpp"

#include <cmath>
#include <set>

#include "narrshift/rng.hpp"
#include "narrshift/util.hpp"

namespace narrshift {

using nlohmann::json;

// --- TOML subset ------------------------------------------------------------

namespace {


class TomlParser {
 public:
  explicit TomlParser(std::string_view text) : text_(text) {}

  json parse() {
    json root = json::object();
    json* table = &root;
    while (!at_end()) {
      skip_ws_and_newlines();
      if (at_end()) break;
      if (peek() == '[') {
        ++pos_;
        if (peek() == '[') fail("arrays of tables are not supported");
        auto path = parse_key_path();
        skip_inline_ws();
        expect(']');
        table = &root;
        for (const auto& part : path) {
          json& next = (*table)[part];
          if (next.is_null()) next = json::object();
          if (!next.is_object()) fail("'" + part + "' is already a value");
          table = &next;
        }
        if (!defined_tables_.insert(join(path)).second) fail("table defined twice");
      } else {
        auto path = parse_key_path();
        skip_inline_ws();
        expect('=');
        skip_inline_ws();
        json value = parse_value();
        json* target = table;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) {
          json& next = (*target)[path[i]];
          if (next.is_null()) next = json::object();
          if (!next.is_object()) fail("'" + path[i] + "' is already a value");
          target = &next;
        }
        if (target->contains(path.back())) fail("duplicate key '" + path.back() + "'");
        (*target)[path.back()] = std::move(value);
      }
      end_of_line();
    }
    return root;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::set<std::string> defined_tables_;

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("config line " + std::to_string(line_) + ": " + what);
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  static std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : ".") + p;
    return out;
  }

  void skip_inline_ws() {
    while (peek() == ' ' || peek() == '\t') ++pos_;
  }

  void skip_comment() {
    if (peek() == '#')
      while (!at_end() && peek() != '\n') ++pos_;
  }

  void skip_ws_and_newlines() {
    for (;;) {
      skip_inline_ws();
      skip_comment();
      if (peek() == '\r') ++pos_;
      if (peek() == '\n') {
        ++pos_;
        ++line_;
        continue;
      }
      return;
    }
  }

  void end_of_line() {
    skip_inline_ws();
    skip_comment();
    if (peek() == '\r') ++pos_;
    if (at_end()) return;
    if (peek() != '\n') fail("unexpected text after value");
    ++pos_;
    ++line_;
  }

  std::vector<std::string> parse_key_path() {
    std::vector<std::string> parts;
    for (;;) {
      skip_inline_ws();
      if (peek() == '"') {
        parts.push_back(parse_basic_string());
      } else if (peek() == '\'') {
        parts.push_back(parse_literal_string());
      } else {
        std::string key;
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' ||
                             peek() == '-'))
          key += text_[pos_++];
        if (key.empty()) fail("expected a key");
        parts.push_back(key);
      }
      skip_inline_ws();
      if (peek() != '.') return parts;
      ++pos_;
    }
  }

  std::string parse_basic_string() {
    expect('"');
    std::string out;
    for (;;) {
      if (at_end() || peek() == '\n') fail("unterminated string");
      const char c = text_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out += c;
        continue;
      }
      const char e = text_[pos_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'u': {
          if (pos_ + 4 > text_.size()) fail("bad \\u escape");
          const auto cp = std::stoul(std::string(text_.substr(pos_, 4)), nullptr, 16);
          pos_ += 4;
          if (cp < 0x80) {
            out += static_cast<char>(cp);
          } else if (cp < 0x800) {
            out += static_cast<char>(0xC0 | (cp >> 6));
            out += static_cast<char>(0x80 | (cp & 0x3F));
          } else {
            out += static_cast<char>(0xE0 | (cp >> 12));
            out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
            out += static_cast<char>(0x80 | (cp & 0x3F));
          }
          break;
        }
        default: fail(std::string("unsupported escape \\") + e);
      }
    }
  }

  std::string parse_literal_string() {
    expect('\'');
    const auto end = text_.find('\'', pos_);
    if (end == std::string_view::npos || text_.substr(pos_, end - pos_).find('\n') !=
                                             std::string_view::npos)
      fail("unterminated string");
    std::string out(text_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return out;
  }

  json parse_value() {
    const char c = peek();
    if (c == '"') {
      if (text_.substr(pos_, 3) == "\"\"\"") fail("multi-line strings are not supported");
      return parse_basic_string();
    }
    if (c == '\'') return parse_literal_string();
    if (c == '[') return parse_array();
    if (c == '{') fail("inline tables are not supported");
    std::string token;
    while (!at_end() && !std::isspace(static_cast<unsigned char>(peek())) && peek() != ',' &&
           peek() != ']' && peek() != '#')
      token += text_[pos_++];
    if (token == "true") return true;
    if (token == "false") return false;
    if (token.empty()) fail("expected a value");
    std::string digits;
    for (char ch : token)
      if (ch != '_') digits += ch;
    const bool is_float = digits.find_first_of(".eE") != std::string::npos ||
                          digits == "inf" || digits == "nan";
    try {
      std::size_t used = 0;
      if (is_float) {
        const double v = std::stod(digits, &used);
        if (used == digits.size()) return v;
      } else {
        const long long v = std::stoll(digits, &used, 10);
        if (used == digits.size()) return v;
      }
    } catch (const std::exception&) {
    }
    fail("cannot read value '" + token + "'");
  }

  json parse_array() {
    expect('[');
    json arr = json::array();
    for (;;) {
      skip_ws_and_newlines();
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      arr.push_back(parse_value());
      skip_ws_and_newlines();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() == ']') {
        ++pos_;
        return arr;
      }
      fail("expected ',' or ']' in array");
    }
  }
};

// --- typed field access -----------------------------------------------------

class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (name_.empty()) {
      j_ = &root;
    } else if (root.contains(name_)) {
      j_ = &root[name_];
      if (!j_->is_object()) throw ConfigError(name_ + ": expected a table");
    }
  }
  ~Section() noexcept(false) {
    if (!j_ || std::uncaught_exceptions()) return;
    for (auto it = j_->begin(); it != j_->end(); ++it)
      if (!seen_.contains(it.key()) && !(name_.empty() && it.value().is_object()))
        throw ConfigError(field(it.key()) + ": unknown key");
  }

  std::string field(const std::string& key) const {
    return name_.empty() ? key : name_ + "." + key;
  }

  const json* get(const std::string& key) {
    seen_.insert(key);
    if (!j_ || !j_->contains(key)) return nullptr;
    return &(*j_)[key];
  }

  template <typename T>
  void read_uint(const std::string& key, T& out) {
    if (auto v = get(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0)
        throw ConfigError(field(key) + ": expected a non-negative integer");
      out = static_cast<T>(v->get<long long>());
    }
  }
  void read_double(const std::string& key, double& out) {
    if (auto v = get(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
      out = v->get<double>();
    }
  }
  void read_bool(const std::string& key, bool& out) {
    if (auto v = get(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }
  void read_string(const std::string& key, std::string& out) {
    if (auto v = get(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }
  void read_path(const std::string& key, std::filesystem::path& out,
                 const std::filesystem::path& base) {
    std::string s;
    if (!get(key)) return;
    read_string(key, s);
    out = resolve(s, base);
  }

  static std::filesystem::path resolve(const std::string& s, const std::filesystem::path& base) {
    if (s.empty()) return {};
    std::filesystem::path p(s);
    return p.is_absolute() || base.empty() ? p : base / p;
  }

 private:
  const json* j_ = nullptr;
  std::string name_;
  std::set<std::string> seen_;
};

}  // namespace

json parse_toml(std::string_view text) { return TomlParser(text).parse(); }

PipelineConfig config_from_toml(std::string_view text, const std::filesystem::path& base_dir) {
  const json root = parse_toml(text);
  static const std::set<std::string> kTables = {"corpus", "lda",      "rolling",  "detect",
                                                "explain", "endpoint", "evaluate"};
  for (auto it = root.begin(); it != root.end(); ++it)
    if (it.value().is_object() && !kTables.contains(it.key()))
      throw ConfigError(it.key() + ": unknown table");

  PipelineConfig c;
  {
    Section top(root, "");
    top.read_uint("seed", c.seed);
    top.read_path("out", c.out, base_dir);
    if (c.out.empty()) c.out = Section::resolve("out", base_dir);
  }
  {
    Section s(root, "corpus");
    if (auto v = s.get("paths")) {
      if (!v->is_array() || v->empty())
        throw ConfigError("corpus.paths: expected a non-empty list of strings");
      for (const auto& p : *v) {
        if (!p.is_string()) throw ConfigError("corpus.paths: expected a list of strings");
        c.corpus.paths.push_back(Section::resolve(p.get<std::string>(), base_dir));
      }
    }
    s.read_uint("min_count", c.corpus.min_count);
    s.read_uint("min_length", c.corpus.min_length);
    s.read_bool("lowercase", c.corpus.lowercase);
    s.read_bool("strip_numeric", c.corpus.strip_numeric);
    s.read_path("stopwords", c.corpus.stopwords, base_dir);
    s.read_bool("skip_malformed", c.corpus.skip_malformed);
  }
  {
    Section s(root, "lda");
    std::uint32_t topics = 50;
    s.read_uint("topics", topics);
    c.rolling.lda = LdaConfig::with_topics(topics);
    s.read_double("alpha", c.rolling.lda.alpha);
    s.read_double("eta", c.rolling.lda.eta);
    s.read_uint("sweeps", c.rolling.lda.sweeps);
    s.read_uint("replicas", c.rolling.replicas);
    s.read_uint("top_r", c.rolling.similarity.top_r);
  }
  {
    Section s(root, "rolling");
    s.read_uint("warmup", c.rolling.warmup);
    s.read_uint("memory", c.rolling.memory);
    s.read_uint("chunk_sweeps", c.rolling.chunk_sweeps);
  }
  {
    Section s(root, "detect");
    s.read_uint("lookback", c.detect.lookback);
    s.read_double("mixture", c.detect.mixture);
    s.read_double("alpha", c.detect.alpha);
    s.read_uint("bootstrap", c.detect.bootstrap);
    s.read_uint("min_tokens", c.detect.min_tokens);
    s.read_uint("impact_top_n", c.detect.impact_top_n);
    s.read_bool("compare_to_current", c.detect.compare_to_current);
  }
  {
    Section s(root, "explain");
    s.read_uint("articles", c.explain.dossier.articles);
    s.read_uint("top_words", c.explain.dossier.top_words);
    std::string strategy = "impact_words";
    s.read_string("strategy", strategy);
    if (strategy == "impact_words") c.explain.dossier.strategy = FilterStrategy::kImpactWords;
    else if (strategy == "topic_share") c.explain.dossier.strategy = FilterStrategy::kTopicShare;
    else throw ConfigError("explain.strategy: expected \"impact_words\" or \"topic_share\"");
    s.read_path("template", c.explain.prompt_template, base_dir);
  }
  {
    Section s(root, "endpoint");
    auto& e = c.endpoint;
    s.read_string("base_url", e.base_url);
    s.read_string("model", e.model);
    s.read_double("temperature", e.temperature);
    s.read_uint("max_tokens", e.max_tokens);
    std::uint64_t timeout_ms = static_cast<std::uint64_t>(e.timeout.count());
    s.read_uint("timeout_ms", timeout_ms);
    e.timeout = std::chrono::milliseconds(timeout_ms);
    s.read_uint("max_retries", e.max_retries);
    s.read_uint("repair_retries", e.repair_retries);
    s.read_uint("context_budget", e.context_budget);
    std::uint64_t backoff_ms = static_cast<std::uint64_t>(e.backoff.count());
    s.read_uint("backoff_ms", backoff_ms);
    e.backoff = std::chrono::milliseconds(backoff_ms);
    s.read_string("api_key_env", e.api_key_env);
    s.read_bool("split_roles", e.split_roles);
    s.read_uint("max_in_flight", e.max_in_flight);
  }
  {
    Section s(root, "evaluate");
    s.read_path("labels", c.labels, base_dir);
  }
  c.rolling.lda.seed = c.seed;
  c.detect.seed = derive_seed(c.seed, kDetectStream);
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  return config_from_toml(text, path.parent_path());
}

void PipelineConfig::validate() const {
  if (corpus.paths.empty()) throw ConfigError("corpus.paths: at least one input file is required");
  if (corpus.min_count < 1) throw ConfigError("corpus.min_count: must be >= 1");
  if (corpus.min_length < 1) throw ConfigError("corpus.min_length: must be >= 1");
  try {
    rolling.lda.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("lda: ") + e.what());
  }
  if (rolling.warmup < 1) throw ConfigError("rolling.warmup: must be >= 1");
  if (rolling.memory < 1) throw ConfigError("rolling.memory: must be >= 1");
  if (rolling.chunk_sweeps < 1) throw ConfigError("rolling.chunk_sweeps: must be >= 1");
  if (rolling.replicas < 2) throw ConfigError("lda.replicas: must be >= 2");
  try {
    detect.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("detect: ") + e.what());
  }
  if (explain.dossier.articles < 1) throw ConfigError("explain.articles: must be >= 1");
  if (explain.dossier.top_words < 1) throw ConfigError("explain.top_words: must be >= 1");
  try {
    endpoint.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("endpoint: ") + e.what());
  }
}

json PipelineConfig::to_json() const {
  json paths = json::array();
  for (const auto& p : corpus.paths) paths.push_back(p.string());
  return {
      {"seed", seed},
      {"corpus",
       {{"paths", paths},
        {"min_count", corpus.min_count},
        {"min_length", corpus.min_length},
        {"lowercase", corpus.lowercase},
        {"strip_numeric", corpus.strip_numeric},
        {"stopwords", corpus.stopwords.string()},
        {"skip_malformed", corpus.skip_malformed}}},
      {"lda",
       {{"topics", rolling.lda.topics},
        {"alpha", rolling.lda.alpha},
        {"eta", rolling.lda.eta},
        {"sweeps", rolling.lda.sweeps},
        {"seed", rolling.lda.seed},
        {"replicas", rolling.replicas},
        {"top_r", rolling.similarity.top_r}}},
      {"rolling",
       {{"warmup", rolling.warmup},
        {"memory", rolling.memory},
        {"chunk_sweeps", rolling.chunk_sweeps}}},
      {"detect",
       {{"lookback", detect.lookback},
        {"mixture", detect.mixture},
        {"alpha", detect.alpha},
        {"bootstrap", detect.bootstrap},
        {"min_tokens", detect.min_tokens},
        {"impact_top_n", detect.impact_top_n},
        {"compare_to_current", detect.compare_to_current},
        {"seed", detect.seed}}},
      {"explain",
       {{"articles", explain.dossier.articles},
        {"top_words", explain.dossier.top_words},
        {"strategy", explain.dossier.strategy == FilterStrategy::kTopicShare ? "topic_share"
                                                                            : "impact_words"},
        {"template", explain.prompt_template.string()}}},
      {"endpoint",
       {{"base_url", endpoint.base_url},
        {"model", endpoint.model},
        {"temperature", endpoint.temperature},
        {"max_tokens", endpoint.max_tokens},
        {"timeout_ms", endpoint.timeout.count()},
        {"max_retries", endpoint.max_retries},
        {"repair_retries", endpoint.repair_retries},
        {"context_budget", endpoint.context_budget},
        {"backoff_ms", endpoint.backoff.count()},
        {"api_key_env", endpoint.api_key_env},
        {"split_roles", endpoint.split_roles},
        {"max_in_flight", endpoint.max_in_flight}}},
      {"evaluate", {{"labels", labels.string()}}},
  };
}

}  // namespace narrshift
