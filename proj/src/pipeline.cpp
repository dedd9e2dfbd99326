#include "narrshift/pipeline.hpp"

#include <fstream>
#include <iostream>
#include <map>

#include "narrshift/corpus.hpp"
#include "narrshift/mock_endpoint.hpp"
#include "narrshift/report.hpp"
#include "narrshift/util.hpp"

namespace narrshift {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view stage_name(Stage stage) {
  switch (stage) {
    case Stage::kIngest: return "ingest";
    case Stage::kFit: return "fit";
    case Stage::kRoll: return "roll";
    case Stage::kDetect: return "detect";
    case Stage::kExplain: return "explain";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kReport: return "report";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view name) {
  for (auto s : kAllStages)
    if (stage_name(s) == name) return s;
  return std::nullopt;
}

fs::path stage_dir(const PipelineConfig& config, Stage stage) {
  switch (stage) {
    case Stage::kIngest: return config.out / "corpus";
    case Stage::kFit: return config.out / "model";
    case Stage::kRoll: return config.out / "roll";
    case Stage::kDetect: return config.out / "detect";
    case Stage::kExplain: return config.out / "analyses";
    case Stage::kEvaluate: return config.out / "eval";
    case Stage::kReport: return config.out / "report";
  }
  return config.out;
}

namespace {

std::string file_hash(const fs::path& path) { return hex64(fnv1a64(read_file(path))); }

/// The upstream stage's run.json must exist; its hash keys this stage's run.
std::string require(const PipelineConfig& config, Stage upstream) {
  const auto path = stage_dir(config, upstream) / "run.json";
  if (!fs::exists(path))
    throw StageError("missing " + path.string() + ": run `" + std::string(stage_name(upstream)) +
                     "` first");
  return file_hash(path);
}

struct StagePlan {
  json parameters;
  json inputs = json::object();
};

StagePlan plan(Stage stage, const PipelineConfig& config, const RunOptions& options) {
  const json all = config.to_json();
  StagePlan p;
  switch (stage) {
    case Stage::kIngest: {
      p.parameters = {{"corpus", all["corpus"]}};
      for (const auto& path : config.corpus.paths) {
        if (!fs::exists(path)) throw StageError("corpus file not found: " + path.string());
        p.inputs[path.filename().string()] = file_hash(path);
      }
      if (!config.corpus.stopwords.empty())
        p.inputs["stopwords"] = file_hash(config.corpus.stopwords);
      break;
    }
    case Stage::kFit:
      p.parameters = {{"lda", all["lda"]}, {"rolling", all["rolling"]}};
      p.inputs["corpus"] = require(config, Stage::kIngest);
      break;
    case Stage::kRoll:
      p.parameters = {{"lda", all["lda"]}, {"rolling", all["rolling"]}};
      p.inputs["corpus"] = require(config, Stage::kIngest);
      p.inputs["model"] = require(config, Stage::kFit);
      break;
    case Stage::kDetect:
      p.parameters = {{"detect", all["detect"]}, {"warmup", config.rolling.warmup}};
      p.inputs["roll"] = require(config, Stage::kRoll);
      break;
    case Stage::kExplain: {
      auto endpoint = all["endpoint"];
      if (options.mock) endpoint["base_url"] = "mock";
      p.parameters = {{"explain", all["explain"]}, {"endpoint", endpoint}, {"mock", options.mock}};
      p.inputs["detect"] = require(config, Stage::kDetect);
      p.inputs["template"] =
          config.explain.prompt_template.empty()
              ? PromptTemplate::bundled().version()
              : PromptTemplate(read_file(config.explain.prompt_template)).version();
      break;
    }
    case Stage::kEvaluate:
      p.parameters = {{"evaluate", all["evaluate"]}};
      p.inputs["analyses"] = require(config, Stage::kExplain);
      if (!config.labels.empty()) {
        if (!fs::exists(config.labels))
          throw StageError("labels file not found: " + config.labels.string());
        p.inputs["labels"] = file_hash(config.labels);
      }
      break;
    case Stage::kReport:
      p.parameters = json::object();
      p.inputs["detect"] = require(config, Stage::kDetect);
      p.inputs["roll"] = require(config, Stage::kRoll);
      break;
  }
  return p;
}

std::string run_record(Stage stage, const PipelineConfig& config, const StagePlan& plan) {
  const json record = {{"stage", stage_name(stage)},
                       {"config_hash", hex64(fnv1a64(plan.parameters.dump()))},
                       {"seed", config.seed},
                       {"parameters", plan.parameters},
                       {"inputs", plan.inputs},
                       {"versions", {{"narrshift", kToolVersion}, {"artifacts", 1}}}};
  return record.dump(2) + "\n";
}

void log(const RunOptions& o, Stage stage, const std::string& msg) {
  if (o.log) *o.log << "[" << stage_name(stage) << "] " << msg << std::endl;
}

ChunkedCorpus corpus_of(const PipelineConfig& config) {
  return load_corpus(stage_dir(config, Stage::kIngest));
}

// --- stages -----------------------------------------------------------------

void do_ingest(const PipelineConfig& config, const RunOptions& o, const fs::path& dir) {
  std::vector<RawRecord> records;
  json skipped = json::array();
  const auto mode = config.corpus.skip_malformed ? IngestMode::kSkipWithReport : IngestMode::kStrict;
  for (const auto& path : config.corpus.paths) {
    IngestResult r;
    try {
      r = ingest_jsonl(path, mode);
    } catch (const CorpusError& e) {
      throw StageError(path.string() + ": " + e.what());
    }
    for (const auto& issue : r.skipped)
      skipped.push_back({{"file", path.filename().string()},
                         {"line", issue.line},
                         {"message", issue.message}});
    records.insert(records.end(), std::make_move_iterator(r.records.begin()),
                   std::make_move_iterator(r.records.end()));
  }
  TokenizerRules rules = TokenizerRules::defaults();
  rules.lowercase = config.corpus.lowercase;
  rules.min_length = config.corpus.min_length;
  rules.strip_numeric = config.corpus.strip_numeric;
  if (!config.corpus.stopwords.empty())
    rules.stopwords = TokenizerRules::read_stopwords(config.corpus.stopwords);
  CorpusStats stats;
  ChunkedCorpus corpus;
  try {
    corpus = build_corpus(records, rules, config.corpus.min_count, &stats, o.threads);
  } catch (const CorpusError& e) {
    throw StageError(e.what());
  }
  save_corpus(corpus, dir);
  const json report = {{"documents", stats.documents},
                       {"tokens_kept", stats.tokens_kept},
                       {"tokens_dropped_oov", stats.tokens_dropped_oov},
                       {"vocabulary", corpus.vocabulary.size()},
                       {"chunks", corpus.chunks.size()},
                       {"skipped", skipped}};
  write_file(dir / "ingest_report.json", report.dump(2) + "\n");
  log(o, Stage::kIngest,
      std::to_string(stats.documents) + " documents, " + std::to_string(corpus.chunks.size()) +
          " chunks, vocabulary " + std::to_string(corpus.vocabulary.size()) +
          (skipped.empty() ? "" : ", " + std::to_string(skipped.size()) + " lines skipped"));
}

void do_fit(const PipelineConfig& config, const RunOptions& o, const fs::path& dir) {
  const auto corpus = corpus_of(config);
  config.rolling.validate(corpus.chunks.size());
  const auto state = fit_warmup(corpus, config.rolling, o.threads);
  const auto& sel = state.warmup_selection;
  save_checkpoint(sel.replicas[sel.chosen], corpus.vocabulary.fingerprint(),
                  dir / "checkpoint.json");
  write_file(dir / "prototype_report.json", prototype_report_json(sel));
  save_snapshots(state.snapshots, corpus, dir / "snapshots");
  save_doc_topics(state, corpus, dir / "doc_topics.jsonl");
  log(o, Stage::kFit,
      "prototype is replica " + std::to_string(sel.chosen) + " of " +
          std::to_string(sel.replicas.size()) + " (mean similarity " +
          std::to_string(sel.mean_similarity(sel.chosen)) + ")");
}

void do_roll(const PipelineConfig& config, const RunOptions& o, const fs::path& dir) {
  const auto corpus = corpus_of(config);
  const auto model_dir = stage_dir(config, Stage::kFit);
  auto state = resume_rolling(corpus, config.rolling, load_snapshots(model_dir / "snapshots"),
                              load_doc_topics(corpus, model_dir / "doc_topics.jsonl"));
  for (std::size_t t = state.next_chunk(); t < corpus.chunks.size(); ++t) roll(state, corpus, t);
  save_snapshots(state.snapshots, corpus, dir / "snapshots");
  save_doc_topics(state, corpus, dir / "doc_topics.jsonl");
  log(o, Stage::kRoll, "modeled " + std::to_string(state.snapshots.size()) + " chunks");
}

void do_detect(const PipelineConfig& config, const RunOptions& o, const fs::path& dir) {
  const auto corpus = corpus_of(config);
  const auto snapshots = load_snapshots(stage_dir(config, Stage::kRoll) / "snapshots");
  const auto result = monitor(snapshots, corpus.vocabulary.size(), config.rolling.warmup,
                              config.detect, o.threads);
  write_file(dir / "monitor.csv", monitor_csv(result.series, corpus.chunks));
  write_file(dir / "changes.json", changes_json(result.events, corpus.vocabulary, corpus.chunks));
  log(o, Stage::kDetect, std::to_string(result.events.size()) + " changes detected");
}

std::string analysis_name(const ChangeEvent& e) {
  return std::to_string(e.topic) + "_" + std::to_string(e.chunk) + ".json";
}

void do_explain(const PipelineConfig& config, const RunOptions& o, const fs::path& dir) {
  const auto corpus = corpus_of(config);
  const auto roll_dir = stage_dir(config, Stage::kRoll);
  const auto snapshots = load_snapshots(roll_dir / "snapshots");
  const auto events = parse_changes_json(
      read_file(stage_dir(config, Stage::kDetect) / "changes.json"), corpus.vocabulary);
  std::vector<std::vector<std::uint32_t>> doc_topics;
  if (config.explain.dossier.strategy == FilterStrategy::kTopicShare)
    doc_topics = load_doc_topics(corpus, roll_dir / "doc_topics.jsonl");

  std::vector<ChangeDossier> dossiers;
  for (const auto& e : events)
    dossiers.push_back(build_dossier(corpus, snapshots, e, config.explain.dossier, doc_topics));
  const auto tmpl = config.explain.prompt_template.empty()
                        ? PromptTemplate::bundled()
                        : PromptTemplate(read_file(config.explain.prompt_template));

  EndpointConfig endpoint = config.endpoint;
  std::unique_ptr<MockEndpoint> mock;
  if (o.mock) {
    mock = std::make_unique<MockEndpoint>(MockEndpoint::appendix_replay());
    endpoint.base_url = mock->base_url();
  }
  std::vector<ExplainResult> results;
  try {
    results = explain_all(dossiers, tmpl, endpoint, o.threads);
  } catch (const PromptBudgetError& e) {
    throw StageError(e.what());
  }

  json index = json::array();
  std::size_t failures = 0;
  std::string first_error;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto name = analysis_name(events[i]);
    write_file(dir / name, analysis_record(dossiers[i], results[i]).dump(2) + "\n");
    index.push_back({{"topic", events[i].topic},
                     {"chunk", events[i].chunk},
                     {"file", name},
                     {"status", to_string(results[i].status)}});
    if (results[i].status == ExplainStatus::kEndpointFailure) {
      if (failures++ == 0) first_error = results[i].error;
    }
  }
  write_file(dir / "index.json", index.dump(2) + "\n");
  if (failures > 0)
    throw EndpointFailure(std::to_string(failures) + " of " + std::to_string(events.size()) +
                          " explanations failed at the endpoint: " + first_error);
  log(o, Stage::kExplain, std::to_string(events.size()) + " changes explained");
}

void do_evaluate(const PipelineConfig& config, const RunOptions& o, const fs::path& dir) {
  if (config.labels.empty()) {
    write_file(dir / "metrics.json",
               json{{"labels", nullptr}, {"note", "no labels file configured"}}.dump(2) + "\n");
    log(o, Stage::kEvaluate, "no labels configured; nothing to score");
    return;
  }
  const auto labels = parse_labels_csv(read_file(config.labels));
  std::map<ChangeKey, bool> truth;
  for (const auto& l : labels)
    if (!truth.emplace(ChangeKey{l.topic, l.chunk}, l.is_narrative_shift).second)
      throw StageError("labels list (" + std::to_string(l.topic) + ", " +
                       std::to_string(l.chunk) + ") twice");
  const auto analyses_dir = stage_dir(config, Stage::kExplain);
  const json index = json::parse(read_file(analyses_dir / "index.json"));
  std::map<ChangeKey, bool> predictions;
  for (const auto& entry : index) {
    if (entry.at("status") != "ok") continue;
    const json record = json::parse(read_file(analyses_dir / entry.at("file").get<std::string>()));
    predictions[{entry.at("topic").get<TopicId>(), entry.at("chunk").get<std::size_t>()}] =
        record.at("analysis").at("true_narrative").get<bool>();
  }
  ConfusionMatrix cm;
  try {
    cm = confusion(predictions, truth);
  } catch (const EvaluationError& e) {
    throw StageError(e.what());
  }
  auto report = metrics(cm);
  report.explanation_accuracy = explanation_accuracy(labels);
  write_file(dir / "metrics.json", metrics_json(cm, report).dump(2) + "\n");
  log(o, Stage::kEvaluate,
      "accuracy " + std::to_string(report.accuracy) + ", f1 " + std::to_string(report.f1));
}

void do_report(const PipelineConfig& config, const RunOptions& o, const fs::path& dir) {
  const auto corpus = corpus_of(config);
  const auto detect_dir = stage_dir(config, Stage::kDetect);
  const auto series = parse_monitor_csv(read_file(detect_dir / "monitor.csv"));
  const auto events = parse_changes_json(read_file(detect_dir / "changes.json"), corpus.vocabulary);
  const auto snapshots = load_snapshots(stage_dir(config, Stage::kRoll) / "snapshots");
  const auto titles = topic_titles(snapshots, corpus.vocabulary);
  const json detect_run = json::parse(read_file(detect_dir / "run.json"));
  emit_monitor_outputs(series, events, titles, corpus.chunks, dir,
                       detect_run.at("config_hash").get<std::string>());
  log(o, Stage::kReport, "wrote " + (dir / "monitor_grid.svg").string());
}

}  // namespace

StageOutcome run_stage(Stage stage, const PipelineConfig& config, const RunOptions& options) {
  const auto dir = stage_dir(config, stage);
  const auto p = plan(stage, config, options);
  const auto record = run_record(stage, config, p);
  const auto run_path = dir / "run.json";
  if (!options.force && fs::exists(run_path) && read_file(run_path) == record) {
    log(options, stage, "up to date");
    return StageOutcome::kUpToDate;
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  if (ec) throw StageError("cannot clear " + dir.string() + ": " + ec.message());
  fs::create_directories(dir);
  switch (stage) {
    case Stage::kIngest: do_ingest(config, options, dir); break;
    case Stage::kFit: do_fit(config, options, dir); break;
    case Stage::kRoll: do_roll(config, options, dir); break;
    case Stage::kDetect: do_detect(config, options, dir); break;
    case Stage::kExplain: do_explain(config, options, dir); break;
    case Stage::kEvaluate: do_evaluate(config, options, dir); break;
    case Stage::kReport: do_report(config, options, dir); break;
  }
  write_file(run_path, record);
  return StageOutcome::kRan;
}

void run_all(const PipelineConfig& config, const RunOptions& options) {
  for (auto stage : kAllStages) run_stage(stage, config, options);
}

}  // namespace narrshift
