#include "narrshift/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "narrshift/util.hpp"

namespace narrshift {

using nlohmann::json;

namespace {

std::string key_list(const std::vector<ChangeKey>& keys) {
  std::string out;
  for (const auto& [k, t] : keys) {
    if (!out.empty()) out += ", ";
    out += "(" + std::to_string(k) + ", " + std::to_string(t) + ")";
  }
  return out;
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionMatrix confusion(const std::map<ChangeKey, bool>& predictions,
                          const std::map<ChangeKey, bool>& labels) {
  std::vector<ChangeKey> missing, unlabeled;
  for (const auto& [key, _] : labels)
    if (!predictions.contains(key)) missing.push_back(key);
  for (const auto& [key, _] : predictions)
    if (!labels.contains(key)) unlabeled.push_back(key);
  if (!missing.empty())
    throw EvaluationError("no prediction for labeled change(s) " + key_list(missing));
  if (!unlabeled.empty())
    throw EvaluationError("no label for predicted change(s) " + key_list(unlabeled));
  ConfusionMatrix cm;
  for (const auto& [key, truth] : labels) {
    const bool predicted = predictions.at(key);
    if (predicted && truth) ++cm.tp;
    else if (predicted) ++cm.fp;
    else if (truth) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw EvaluationError("cannot score an empty confusion matrix");
  MetricsReport r;
  r.accuracy = ratio(cm.tp + cm.tn, cm.total());
  r.precision = ratio(cm.tp, cm.tp + cm.fp);
  r.recall = ratio(cm.tp, cm.tp + cm.fn);
  r.f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
  return r;
}

std::vector<ConfusionMatrix> matrices_matching(std::uint64_t total, std::uint64_t positives,
                                               std::uint64_t predicted_positive,
                                               double accuracy, double f1, int decimals) {
  const double scale = std::pow(10.0, decimals);
  auto rounded = [&](double x) { return std::round(x * scale); };
  std::vector<ConfusionMatrix> out;
  for (std::uint64_t tp = 0; tp <= total; ++tp)
    for (std::uint64_t fp = 0; tp + fp <= total; ++fp)
      for (std::uint64_t fn = 0; tp + fp + fn <= total; ++fn) {
        ConfusionMatrix cm{tp, fp, fn, total - tp - fp - fn};
        if (cm.tp + cm.fn != positives || cm.tp + cm.fp != predicted_positive) continue;
        const auto m = metrics(cm);
        if (rounded(m.accuracy) == rounded(accuracy) && rounded(m.f1) == rounded(f1))
          out.push_back(cm);
      }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else if (c != '\r') {
      out.back() += c;
    }
  }
  return out;
}

std::optional<bool> parse_bool(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  return std::nullopt;
}

}  // namespace

std::vector<AnnotationLabel> parse_labels_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw EvaluationError("labels file is empty");
  const auto header = split_csv_line(line);
  const std::vector<std::string> expected = {"topic_id", "chunk_index", "is_narrative_shift",
                                             "note"};
  if (header.size() < 4 || !std::equal(expected.begin(), expected.end(), header.begin()) ||
      (header.size() == 5 && header[4] != "explanation_correct") || header.size() > 5)
    throw EvaluationError(
        "labels header must be topic_id,chunk_index,is_narrative_shift,note"
        "[,explanation_correct]");
  std::vector<AnnotationLabel> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    const auto where = "labels line " + std::to_string(line_no) + ": ";
    if (f.size() < 3 || f.size() > header.size())
      throw EvaluationError(where + "expected " + std::to_string(header.size()) + " fields");
    AnnotationLabel l;
    try {
      std::size_t used = 0;
      l.topic = static_cast<TopicId>(std::stoul(f[0], &used));
      if (used != f[0].size()) throw std::invalid_argument("topic");
      l.chunk = std::stoul(f[1], &used);
      if (used != f[1].size()) throw std::invalid_argument("chunk");
    } catch (const std::exception&) {
      throw EvaluationError(where + "topic_id and chunk_index must be non-negative integers");
    }
    const auto shift = parse_bool(f[2]);
    if (!shift) throw EvaluationError(where + "is_narrative_shift must be true or false");
    l.is_narrative_shift = *shift;
    if (f.size() > 3) l.note = f[3];
    if (f.size() > 4 && !f[4].empty()) {
      l.explanation_correct = parse_bool(f[4]);
      if (!l.explanation_correct)
        throw EvaluationError(where + "explanation_correct must be true, false or blank");
    }
    out.push_back(std::move(l));
  }
  return out;
}

std::optional<double> explanation_accuracy(std::span<const AnnotationLabel> labels) {
  std::uint64_t judged = 0, correct = 0;
  for (const auto& l : labels)
    if (l.is_narrative_shift && l.explanation_correct) {
      ++judged;
      correct += *l.explanation_correct ? 1 : 0;
    }
  if (judged == 0) return std::nullopt;
  return ratio(correct, judged);
}

json metrics_json(const ConfusionMatrix& cm, const MetricsReport& r) {
  return {{"confusion", {{"tp", cm.tp}, {"fp", cm.fp}, {"fn", cm.fn}, {"tn", cm.tn}}},
          {"total", cm.total()},
          {"accuracy", r.accuracy},
          {"precision", r.precision},
          {"recall", r.recall},
          {"f1", r.f1},
          {"explanation_accuracy",
           r.explanation_accuracy ? json(*r.explanation_accuracy) : json(nullptr)}};
}

std::vector<std::string> topic_titles(std::span<const ChunkTopicSnapshot> snapshots,
                                      const Vocabulary& vocabulary, std::size_t n) {
  std::size_t topics = 0;
  for (const auto& s : snapshots) topics = std::max(topics, s.topics.size());
  std::vector<std::string> out;
  for (std::size_t k = 0; k < topics; ++k) {
    std::vector<std::uint64_t> totals(vocabulary.size(), 0);
    for (const auto& s : snapshots)
      if (k < s.topics.size())
        for (const auto& [w, c] : s.topics[k]) totals[w] += c;
    std::vector<WordId> order;
    for (WordId w = 0; w < totals.size(); ++w)
      if (totals[w] > 0) order.push_back(w);
    const auto keep = std::min(n, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                      order.end(), [&](WordId a, WordId b) {
                        return totals[a] != totals[b] ? totals[a] > totals[b] : a < b;
                      });
    std::string title;
    for (std::size_t i = 0; i < keep; ++i) {
      if (i) title += ", ";
      title += vocabulary.word(order[i]);
    }
    out.push_back(title.empty() ? "topic " + std::to_string(k) : title);
  }
  return out;
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

constexpr int kColumns = 5;
constexpr double kPanelW = 300, kPanelH = 170, kPadL = 34, kPadR = 8, kPadT = 30, kPadB = 22;

}  // namespace

std::string monitor_svg(const MonitorSeries& series, std::span<const ChangeEvent> changes,
                        std::span<const std::string> titles,
                        std::span<const TimeChunk> chunks) {
  const std::size_t topics = series.topics();
  const std::size_t rows = (topics + kColumns - 1) / kColumns;
  const int columns = topics < static_cast<std::size_t>(kColumns) ? static_cast<int>(topics)
                                                                  : kColumns;
  const double width = std::max(1, columns) * kPanelW;
  const double height = std::max<std::size_t>(rows, 1) * kPanelH;

  // y range shared by every panel
  double lo = 1.0;
  for (const auto& row : series.cells)
    for (const auto& c : row) {
      if (std::isfinite(c.similarity)) lo = std::min(lo, c.similarity);
      if (std::isfinite(c.threshold)) lo = std::min(lo, c.threshold);
    }
  lo = std::max(0.0, std::floor(lo * 10.0) / 10.0);
  if (lo >= 1.0) lo = 0.9;

  const std::size_t first = series.first_monitored;
  const std::size_t span_chunks = series.chunks > first ? series.chunks - first : 1;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(height) << "\" viewBox=\"0 0 " << num(width) << ' ' << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t k = 0; k < topics; ++k) {
    const double ox = static_cast<double>(k % kColumns) * kPanelW;
    const double oy = static_cast<double>(k / kColumns) * kPanelH;
    const double pw = kPanelW - kPadL - kPadR, ph = kPanelH - kPadT - kPadB;
    auto x_at = [&](std::size_t t) {
      const double frac = span_chunks > 1 ? static_cast<double>(t - first) /
                                                static_cast<double>(span_chunks - 1)
                                          : 0.5;
      return ox + kPadL + frac * pw;
    };
    auto y_at = [&](double v) { return oy + kPadT + (1.0 - (v - lo) / (1.0 - lo)) * ph; };

    svg << "<g class=\"panel\" data-topic=\"" << k << "\">\n";
    const std::string title = k < titles.size() ? titles[k] : "topic " + std::to_string(k);
    svg << "<text x=\"" << num(ox + kPadL) << "\" y=\"" << num(oy + 14) << "\" font-weight=\"bold\">"
        << k << ": " << xml_escape(title) << "</text>\n";
    svg << "<rect x=\"" << num(ox + kPadL) << "\" y=\"" << num(oy + kPadT) << "\" width=\""
        << num(pw) << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"#bbb\"/>\n";
    svg << "<text x=\"" << num(ox + 2) << "\" y=\"" << num(oy + kPadT + 8) << "\">1.0</text>\n";
    svg << "<text x=\"" << num(ox + 2) << "\" y=\"" << num(oy + kPadT + ph) << "\">" << num(lo)
        << "</text>\n";
    if (first < series.chunks && !chunks.empty()) {
      auto label = [&](std::size_t t) {
        return t < chunks.size() ? chunks[t].period.label() : std::to_string(t);
      };
      svg << "<text x=\"" << num(ox + kPadL) << "\" y=\"" << num(oy + kPanelH - 6) << "\">"
          << label(first) << "</text>\n";
      svg << "<text x=\"" << num(ox + kPadL + pw) << "\" y=\"" << num(oy + kPanelH - 6)
          << "\" text-anchor=\"end\">" << label(series.chunks - 1) << "</text>\n";
    }

    for (const auto& [cls, colour, field] :
         {std::tuple{"similarity", "#1f4e9c", &MonitorCell::similarity},
          std::tuple{"threshold", "#888888", &MonitorCell::threshold}}) {
      std::string points;
      auto flush = [&] {
        if (!points.empty())
          svg << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << colour
              << "\" stroke-width=\"1.2\" points=\"" << points << "\"/>\n";
        points.clear();
      };
      for (std::size_t t = first; t < series.chunks; ++t) {
        const double v = series.cells[k][t].*field;
        if (!std::isfinite(v)) {
          flush();
          continue;
        }
        if (!points.empty()) points += ' ';
        points += num(x_at(t)) + "," + num(y_at(std::max(v, lo)));
      }
      flush();
    }

    for (const auto& e : changes) {
      if (e.topic != k || e.chunk < first || e.chunk >= series.chunks) continue;
      svg << "<line class=\"change\" x1=\"" << num(x_at(e.chunk)) << "\" x2=\""
          << num(x_at(e.chunk)) << "\" y1=\"" << num(oy + kPadT) << "\" y2=\""
          << num(oy + kPadT + ph) << "\" stroke=\"red\" stroke-width=\"1\"/>\n";
    }
    svg << "</g>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

void emit_monitor_outputs(const MonitorSeries& series, std::span<const ChangeEvent> changes,
                          std::span<const std::string> titles,
                          std::span<const TimeChunk> chunks, const std::filesystem::path& dir,
                          const std::string& config_hash) {
  const auto csv = monitor_csv(series, chunks);
  const auto svg = monitor_svg(series, changes, titles, chunks);
  write_file(dir / "monitor.csv", csv);
  write_file(dir / "monitor_grid.svg", svg);
  const json manifest = {{"config_hash", config_hash},
                         {"files",
                          {{"monitor.csv", hex64(fnv1a64(csv))},
                           {"monitor_grid.svg", hex64(fnv1a64(svg))}}}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace narrshift
