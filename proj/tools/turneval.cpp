#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "turneval/errors.hpp"
#include "turneval/pipeline.hpp"

#ifndef TURNEVAL_TEMPLATE_DIR
#define TURNEVAL_TEMPLATE_DIR "templates"
#endif

namespace {

using namespace turneval;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kBackend = 3 };

std::vector<fs::path> as_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

Optimizer parse_optimizer(const std::string& name) {
  if (name == "sgd") return Optimizer::Sgd;
  if (name == "adam") return Optimizer::Adam;
  throw UsageError("unknown optimizer `" + name + "` (sgd | adam)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Turn-level dialogue response evaluation"};
  app.require_subcommand(1);

  std::vector<std::string> corpora, gold;
  std::string out, mapping, template_path = TURNEVAL_TEMPLATE_DIR, examples = "none", store;
  std::string embedder = "mock:64", backend = "mock:const:3.0", quality = "all", cache;
  std::string predictions, optimizer = "sgd";
  double val_fraction = 0.2, fallback = kDefaultFallback, lr = 5e-5;
  std::uint64_t seed = 0;
  int concurrency = 4, max_tokens = 0, epochs = 200, patience = 10;
  std::size_t max_context = 8;
  long batch = 2048, hidden = kDefaultHidden;
  bool all_qualities = false;

  auto* ingest = app.add_subcommand("ingest", "Map annotations and split the corpus");
  ingest->add_option("--corpus", corpora, "Corpus JSONL (repeatable)")->required();
  ingest->add_option("--mapping", mapping, "Annotation mapping JSON")->required();
  ingest->add_option("--val-fraction", val_fraction, "Validation share of dialogues");
  ingest->add_option("--seed", seed, "Split seed");
  ingest->add_option("--out", out, "Output directory")->required();

  auto* build = app.add_subcommand("build-store", "Embed scored turns into a vector store");
  build->add_option("--corpus", corpora, "Scored corpus JSONL (repeatable)")->required();
  build->add_option("--embedder", embedder, "mock:<dim>[:<seed>] | remote:<dim>:<url>");
  build->add_option("--max-context", max_context, "Preceding turns kept as context");
  build->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Score turns with an LLM backend");
  eval->add_option("--corpus", corpora, "Corpus JSONL (repeatable)")->required();
  eval->add_option("--template", template_path, "Template file or directory");
  eval->add_option("--examples", examples, "none | fixed:<path> | dynamic:<k>");
  eval->add_option("--store", store, "Vector store for dynamic examples");
  eval->add_option("--embedder", embedder, "Embedder matching the store");
  eval->add_option("--backend", backend, "mock:const:<text> | mock:oracle:<json> | chat:<model>@<url>");
  eval->add_option("--quality", quality, "Quality name or `all`");
  eval->add_flag("--all-qualities", all_qualities, "One call scores all four qualities");
  eval->add_option("--fallback", fallback, "Score used when a reply does not parse");
  eval->add_option("--seed", seed, "Run seed");
  eval->add_option("--concurrency", concurrency, "Maximum in-flight requests");
  eval->add_option("--max-context", max_context, "Preceding turns shown in the prompt");
  eval->add_option("--max-tokens", max_tokens, "Completion token cap (0: automatic)");
  eval->add_option("--out", out, "Output directory")->required();

  auto* ffn = app.add_subcommand("train-ffn", "Train one regressor per quality on cached embeddings");
  ffn->add_option("--cache", cache, "Embedding cache file")->required();
  ffn->add_option("--corpus", corpora, "Scored corpus JSONL (repeatable)")->required();
  ffn->add_option("--quality", quality, "Quality name or `all`");
  ffn->add_option("--val-fraction", val_fraction, "Validation share of dialogues");
  ffn->add_option("--seed", seed, "Split, init and shuffle seed");
  ffn->add_option("--epochs", epochs, "Epoch budget");
  ffn->add_option("--patience", patience, "Epochs without SCC improvement before stopping");
  ffn->add_option("--batch-size", batch, "Minibatch size");
  ffn->add_option("--lr", lr, "Learning rate");
  ffn->add_option("--hidden", hidden, "Units per hidden layer");
  ffn->add_option("--optimizer", optimizer, "sgd | adam");
  ffn->add_option("--out", out, "Output directory")->required();

  auto* report = app.add_subcommand("report", "Correlate predictions with gold scores");
  report->add_option("--predictions", predictions, "predictions.jsonl")->required();
  report->add_option("--gold", gold, "Gold corpus JSONL (repeatable)");
  report->add_option("--corpus", gold, "Alias of --gold");
  report->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*ingest) {
      cmd_ingest({as_paths(corpora), mapping, val_fraction, seed, out}, std::cout);
    } else if (*build) {
      cmd_build_store({as_paths(corpora), embedder, max_context, out}, std::cout);
    } else if (*eval) {
      EvalConfig c;
      c.corpora = as_paths(corpora);
      c.template_path = template_path;
      c.examples = examples;
      c.store = store;
      c.embedder = embedder;
      c.backend = backend;
      c.qualities = parse_quality_selection(quality);
      c.all_qualities = all_qualities;
      c.fallback = fallback;
      c.seed = seed;
      c.out = out;
      c.concurrency = concurrency;
      c.max_context = max_context;
      c.max_output_tokens = max_tokens;
      cmd_eval(c, std::cout);
    } else if (*ffn) {
      TrainFfnConfig c;
      c.cache = cache;
      c.corpora = as_paths(corpora);
      c.val_fraction = val_fraction;
      c.seed = seed;
      c.out = out;
      c.hidden = hidden;
      c.qualities = parse_quality_selection(quality);
      c.train.batch_size = batch;
      c.train.learning_rate = lr;
      c.train.max_epochs = epochs;
      c.train.patience = patience;
      c.train.seed = seed;
      c.train.optimizer = parse_optimizer(optimizer);
      cmd_train_ffn(c, std::cout);
    } else if (*report) {
      if (gold.empty()) throw UsageError("--gold is required");
      cmd_report({predictions, as_paths(gold), out}, std::cout);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return kBackend;
  } catch (const UnjoinableError& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& k : e.keys()) std::cerr << "  unjoinable: " << k << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
