#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "narrshift/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kStage = 2, kEndpoint = 3 };

struct Flags {
  std::string config;
  std::string out;
  bool force = false;
  bool mock = false;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detect and explain narrative shifts in time-stamped news corpora"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"ingest", "Read JSONL articles, tokenize and split into monthly chunks"},
      {"fit", "Train the warm-up LDAPrototype"},
      {"roll", "Model the remaining chunks with RollingLDA"},
      {"detect", "Run the Topical Changes detector"},
      {"explain", "Ask the LLM endpoint to explain each detected change"},
      {"evaluate", "Score the LLM verdicts against hand labels"},
      {"report", "Write monitor.csv and the monitoring grid SVG"},
      {"all", "Run every stage in order"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "Pipeline config (TOML)")->required();
    sub->add_flag("--force", flags.force, "Rerun even when outputs are up to date");
    sub->add_flag("--mock", flags.mock, "Answer LLM calls from the built-in replay endpoint");
    sub->add_option("--threads", flags.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", flags.out, "Output directory (overrides the config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  narrshift::PipelineConfig config;
  try {
    config = narrshift::load_config(flags.config);
    if (!flags.out.empty()) config.out = flags.out;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }

  narrshift::RunOptions options;
  options.force = flags.force;
  options.mock = flags.mock;
  options.threads = flags.threads;
  options.log = &std::cerr;
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "all") narrshift::run_all(config, options);
    else narrshift::run_stage(*narrshift::parse_stage(command), config, options);
  } catch (const narrshift::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const narrshift::EndpointFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kEndpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStage;
  }
  return kOk;
}
