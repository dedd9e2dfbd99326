#include <iostream>

#include "CLI11.hpp"
#include "narrshift/synthetic.hpp"
#include "narrshift/util.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a two-theme synthetic news corpus with a planted shift"};
  narrshift::PlantedShiftOptions o;
  std::string out = "corpus.jsonl";
  app.add_option("--out", out, "Output JSONL file");
  app.add_option("--seed", o.seed, "Generator seed");
  app.add_option("--chunks", o.chunks, "Number of monthly chunks");
  app.add_option("--shift", o.shift_chunk, "Chunk where the shift starts");
  app.add_option("--docs", o.docs_per_chunk, "Documents per chunk");
  app.add_option("--length", o.doc_length, "Tokens per document");
  bool iid = false;
  app.add_flag("--iid", iid, "Draw tokens independently instead of systematically");
  CLI11_PARSE(app, argc, argv);
  o.stratified = !iid;
  try {
    const auto corpus = narrshift::planted_shift_corpus(o);
    narrshift::write_file(out, narrshift::records_jsonl(corpus.records));
    std::cerr << "wrote " << corpus.records.size() << " documents to " << out << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
