#include "narrshift/change_detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "narrshift/util.hpp"

namespace narrshift {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

void DetectorConfig::validate() const {
  if (lookback < 1) throw ConfigError("detector.lookback must be >= 1");
  if (!(mixture >= 0.0 && mixture <= 1.0)) throw ConfigError("detector.mixture must lie in [0, 1]");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("detector.alpha must lie in (0, 1)");
  if (bootstrap < 1) throw ConfigError("detector.bootstrap must be >= 1");
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw std::invalid_argument("cosine of vectors with different dimensions");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

LookbackWindow lookback_window(std::size_t t, std::uint32_t z,
                               std::optional<std::size_t> last_change, std::size_t floor) {
  std::size_t first = t > z ? t - z : 0;
  if (last_change) first = std::max(first, *last_change + 1);
  first = std::max(first, floor);
  return {first, t};
}

std::optional<std::vector<double>> lookback_vector(
    std::span<const ChunkTopicSnapshot> snapshots, TopicId k, std::size_t t, std::uint32_t z,
    std::optional<std::size_t> last_change, std::size_t vocab_size, std::size_t floor) {
  const auto window = lookback_window(t, z, last_change, floor);
  if (window.empty()) return std::nullopt;
  std::vector<double> v(vocab_size, 0.0);
  for (std::size_t c = window.first; c < window.last; ++c) snapshots[c].accumulate(k, v);
  return v;
}

std::optional<std::vector<double>> mix(std::span<const double> lookback,
                                       std::span<const double> current, double p) {
  if (lookback.size() != current.size())
    throw std::invalid_argument("mix of vectors with different dimensions");
  const double lb_mass = sum(lookback), cur_mass = sum(current);
  if (lb_mass == 0.0 && cur_mass == 0.0) return std::nullopt;
  const double wl = lb_mass > 0.0 ? p / lb_mass : 0.0;
  const double wc = cur_mass > 0.0 ? (1.0 - p) / cur_mass : 0.0;
  std::vector<double> out(lookback.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (wl * lookback[i] + wc * current[i]) * lb_mass;
  return out;
}

std::vector<double> bootstrap_similarities(std::span<const double> mixed,
                                           std::uint64_t n_current, std::uint32_t B, Rng& rng,
                                           std::span<const double> reference) {
  if (reference.empty()) reference = mixed;
  if (reference.size() != mixed.size())
    throw std::invalid_argument("bootstrap reference has a different dimension");
  // Samples live on the support of `mixed`; the reference's mass outside it
  // only enters its norm.
  std::vector<std::size_t> support;
  std::vector<double> weights;
  for (std::size_t i = 0; i < mixed.size(); ++i)
    if (mixed[i] > 0.0) {
      support.push_back(i);
      weights.push_back(mixed[i]);
    }
  double ref_norm2 = 0.0;
  for (double x : reference) ref_norm2 += x * x;
  const AliasTable table(weights);
  std::vector<double> sims(B);
  std::vector<std::uint64_t> counts(support.size());
  for (std::uint32_t b = 0; b < B; ++b) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::uint64_t n = 0; n < n_current; ++n) ++counts[table.sample(rng)];
    double dot = 0.0, ns = 0.0;
    for (std::size_t j = 0; j < support.size(); ++j) {
      const double c = static_cast<double>(counts[j]);
      dot += c * reference[support[j]];
      ns += c * c;
    }
    sims[b] = (ns == 0.0 || ref_norm2 == 0.0) ? 0.0 : dot / (std::sqrt(ns) * std::sqrt(ref_norm2));
  }
  std::sort(sims.begin(), sims.end());
  return sims;
}

double lower_quantile(std::span<const double> sorted, double alpha) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  const double raw = std::ceil(alpha * static_cast<double>(sorted.size()) - 1e-9);
  const std::size_t rank = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1,
                                                   sorted.size());
  return sorted[rank - 1];
}

std::optional<double> bootstrap_threshold(std::span<const double> mixed,
                                          std::uint64_t n_current, std::uint32_t B,
                                          double alpha, Rng& rng) {
  if (n_current == 0 || !(sum(mixed) > 0.0) || B == 0) return std::nullopt;
  const auto sims = bootstrap_similarities(mixed, n_current, B, rng);
  return lower_quantile(sims, alpha);
}

std::vector<WordImpact> loo_impacts(std::span<const double> lookback_mixed,
                                    std::span<const double> current, std::size_t top_n) {
  if (lookback_mixed.size() != current.size())
    throw std::invalid_argument("impact vectors have different dimensions");
  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < current.size(); ++i)
    if (lookback_mixed[i] != 0.0 || current[i] != 0.0) support.push_back(i);

  // Each deletion is a full recomputation over the support in index order.
  auto cosine_without = [&](std::size_t skip) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (auto i : support) {
      if (i == skip) continue;
      const double a = lookback_mixed[i], b = current[i];
      dot += a * b;
      na += a * a;
      nb += b * b;
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };
  const double base = 1.0 - cosine_without(std::numeric_limits<std::size_t>::max());
  std::vector<WordImpact> impacts;
  impacts.reserve(support.size());
  for (auto w : support)
    impacts.push_back({static_cast<WordId>(w), base - (1.0 - cosine_without(w))});
  auto better = [](const WordImpact& a, const WordImpact& b) {
    return a.impact != b.impact ? a.impact > b.impact : a.word < b.word;
  };
  const std::size_t keep = std::min(top_n, impacts.size());
  std::partial_sort(impacts.begin(), impacts.begin() + static_cast<std::ptrdiff_t>(keep),
                    impacts.end(), better);
  impacts.resize(keep);
  return impacts;
}

TestOutcome test_change(const std::optional<std::vector<double>>& lookback,
                        std::span<const double> current, const DetectorConfig& config,
                        Rng& rng) {
  TestOutcome out;
  out.similarity = kNaN;
  out.threshold = kNaN;
  out.n_current = static_cast<std::uint64_t>(std::llround(sum(current)));
  if (!lookback) return out;
  auto mixed = mix(*lookback, current, config.mixture);
  if (!mixed) return out;
  out.similarity = cosine_similarity(current, *mixed);
  if (out.n_current < std::max<std::uint64_t>(config.min_tokens, 1) || !(sum(*mixed) > 0.0)) {
    out.mixed = std::move(*mixed);
    return out;
  }
  const auto sims = bootstrap_similarities(*mixed, out.n_current, config.bootstrap, rng,
                                           config.compare_to_current ? current
                                                                     : std::span<const double>{});
  out.threshold = lower_quantile(sims, config.alpha);
  out.tested = true;
  out.change = out.similarity < out.threshold;
  out.mixed = std::move(*mixed);
  return out;
}

ChangeDetector::ChangeDetector(DetectorConfig config, std::size_t topics,
                               std::size_t vocab_size, std::size_t first_monitored,
                               std::size_t total_chunks, std::size_t window_floor)
    : config_(config), vocab_size_(vocab_size), window_floor_(window_floor) {
  config_.validate();
  series_.first_monitored = first_monitored;
  series_.chunks = total_chunks;
  MonitorCell blank;
  blank.similarity = kNaN;
  blank.threshold = kNaN;
  series_.cells.assign(topics, std::vector<MonitorCell>(total_chunks, blank));
  series_.last_change.assign(topics, std::nullopt);
}

std::optional<ChangeEvent> ChangeDetector::detect(std::span<const ChunkTopicSnapshot> snapshots,
                                                  TopicId k, std::size_t t) {
  if (t < series_.first_monitored || t >= series_.chunks || t >= snapshots.size())
    throw std::out_of_range("chunk " + std::to_string(t) + " is not a monitored chunk");
  if (k >= series_.topics()) throw std::out_of_range("topic id out of range");
  const auto lookback = lookback_vector(snapshots, k, t, config_.lookback, series_.last_change[k],
                                        vocab_size_, window_floor_);
  const auto current = snapshots[t].dense(k, vocab_size_);
  Rng rng(derive_seed(config_.seed, kBootstrapStream, k, t));
  TestOutcome outcome = test_change(lookback, current, config_, rng);

  auto& cell = series_.cells[k][t];
  cell.n_current = outcome.n_current;
  cell.similarity = outcome.similarity;
  cell.threshold = outcome.threshold;
  cell.tested = outcome.tested;
  cell.change = outcome.change;
  if (!outcome.change) return std::nullopt;

  series_.last_change[k] = t;
  ChangeEvent event{k, t, outcome.similarity, outcome.threshold,
                    loo_impacts(outcome.mixed, current, config_.impact_top_n)};
  return event;
}

MonitorResult monitor(std::span<const ChunkTopicSnapshot> snapshots, std::size_t vocab_size,
                      std::size_t first_monitored, const DetectorConfig& config,
                      unsigned threads) {
  std::size_t topics = 0;
  for (const auto& s : snapshots) topics = std::max(topics, s.topics.size());
  ChangeDetector detector(config, topics, vocab_size, first_monitored, snapshots.size());
  MonitorResult result;
  std::vector<std::optional<ChangeEvent>> found(topics);
  for (std::size_t t = first_monitored; t < snapshots.size(); ++t) {
    // Each topic touches only its own cells and last-change entry.
    parallel_for(topics, threads, [&](std::size_t k) {
      found[k] = detector.detect(snapshots, static_cast<TopicId>(k), t);
    });
    for (auto& e : found)
      if (e) result.events.push_back(std::move(*e));
  }
  result.series = detector.series();
  return result;
}

// --- files ------------------------------------------------------------------

namespace {

std::string fmt_real(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10f", x);
  return buf;
}

std::string period_label(std::span<const TimeChunk> chunks, std::size_t t) {
  return t < chunks.size() ? chunks[t].period.first_day().to_string().substr(0, 7) : "";
}

}  // namespace

std::string monitor_csv(const MonitorSeries& series, std::span<const TimeChunk> chunks) {
  std::ostringstream out;
  out << "topic_id,chunk_index,period,n_current,similarity,threshold,tested,change\n";
  for (std::size_t k = 0; k < series.topics(); ++k)
    for (std::size_t t = series.first_monitored; t < series.chunks; ++t) {
      const auto& c = series.cells[k][t];
      out << k << ',' << t << ',' << period_label(chunks, t) << ',' << c.n_current << ','
          << fmt_real(c.similarity) << ',' << fmt_real(c.threshold) << ',' << (c.tested ? 1 : 0)
          << ',' << (c.change ? 1 : 0) << '\n';
    }
  return out.str();
}

MonitorSeries parse_monitor_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  struct Row {
    std::size_t k, t;
    MonitorCell cell;
  };
  std::vector<Row> rows;
  std::size_t topics = 0, chunks = 0, first = std::numeric_limits<std::size_t>::max();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 8) throw std::runtime_error("malformed monitor.csv row: " + line);
    Row r{std::stoull(f[0]), std::stoull(f[1]), {}};
    r.cell.n_current = std::stoull(f[3]);
    r.cell.similarity = f[4].empty() ? kNaN : std::stod(f[4]);
    r.cell.threshold = f[5].empty() ? kNaN : std::stod(f[5]);
    r.cell.tested = f[6] == "1";
    r.cell.change = f[7] == "1";
    topics = std::max(topics, r.k + 1);
    chunks = std::max(chunks, r.t + 1);
    first = std::min(first, r.t);
    rows.push_back(r);
  }
  MonitorSeries s;
  s.first_monitored = rows.empty() ? 0 : first;
  s.chunks = chunks;
  MonitorCell blank;
  blank.similarity = kNaN;
  blank.threshold = kNaN;
  s.cells.assign(topics, std::vector<MonitorCell>(chunks, blank));
  s.last_change.assign(topics, std::nullopt);
  for (const auto& r : rows) {
    s.cells[r.k][r.t] = r.cell;
    if (r.cell.change) s.last_change[r.k] = std::max(s.last_change[r.k].value_or(0), r.t);
  }
  return s;
}

std::string changes_json(std::span<const ChangeEvent> events, const Vocabulary& vocabulary,
                         std::span<const TimeChunk> chunks) {
  json arr = json::array();
  for (const auto& e : events) {
    json impacts = json::array();
    for (const auto& w : e.impacts)
      impacts.push_back({{"word", vocabulary.word(w.word)}, {"impact", w.impact}});
    arr.push_back({{"topic", e.topic},
                   {"chunk", e.chunk},
                   {"period", period_label(chunks, e.chunk)},
                   {"similarity", e.similarity},
                   {"threshold", e.threshold},
                   {"impacts", std::move(impacts)}});
  }
  return arr.dump(1) + "\n";
}

std::vector<ChangeEvent> parse_changes_json(const std::string& text,
                                            const Vocabulary& vocabulary) {
  std::vector<ChangeEvent> out;
  for (const auto& j : json::parse(text)) {
    ChangeEvent e;
    e.topic = j.at("topic");
    e.chunk = j.at("chunk");
    e.similarity = j.at("similarity");
    e.threshold = j.at("threshold");
    for (const auto& w : j.at("impacts")) {
      const auto id = vocabulary.find(w.at("word").get<std::string>());
      if (!id) throw std::runtime_error("changes.json names a word outside the vocabulary");
      e.impacts.push_back({*id, w.at("impact").get<double>()});
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace narrshift
