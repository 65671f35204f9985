#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "turneval/data.hpp"
#include "turneval/llm_client.hpp"
#include "turneval/metrics.hpp"
#include "turneval/prompt.hpp"
#include "turneval/regressor.hpp"
#include "turneval/scoring.hpp"

namespace turneval {

/// Bad command-line values (exit code 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

namespace fs = std::filesystem;

// ---------------------------------------------------------------- ingest

struct IngestConfig {
  std::vector<fs::path> corpora;
  fs::path mapping;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  fs::path out;
};

struct IngestSummary {
  std::size_t dialogues = 0;
  std::size_t train_dialogues = 0;
  std::size_t val_dialogues = 0;
  std::map<Quality, std::size_t> coverage;  // scored turns per quality
  std::size_t warnings = 0;
};

/// Writes corpus.jsonl, train.jsonl, val.jsonl, manifest.json and
/// mapping_warnings.jsonl under `out`.
IngestSummary cmd_ingest(const IngestConfig& config, std::ostream& log);

// ----------------------------------------------------------- build-store

struct BuildStoreConfig {
  std::vector<fs::path> corpora;
  std::string embedder = "mock:64";
  std::size_t max_context = 8;
  fs::path out;
};

/// One example per (scored turn, quality); context is the serialized
/// preceding window. `cache`, when given, receives one row per scored turn.
std::vector<FewShotExample> examples_from_corpus(const Corpus& corpus, EmbeddingProvider& embedder,
                                                 std::size_t max_context,
                                                 EmbeddingCache* cache = nullptr);

/// Writes store.bin and embeddings.cache under `out`.
VectorStore cmd_build_store(const BuildStoreConfig& config, std::ostream& log);

// ------------------------------------------------------------------ eval

struct EvalConfig {
  std::vector<fs::path> corpora;
  fs::path template_path;
  std::string examples = "none";  // none | fixed:<path> | dynamic:<k>
  fs::path store;                 // required for dynamic
  std::string embedder = "mock:64";
  std::string backend = "mock:const:3.0";
  std::vector<Quality> qualities{kAllQualities.begin(), kAllQualities.end()};
  bool all_qualities = false;
  double fallback = kDefaultFallback;
  std::uint64_t seed = 0;
  fs::path out;
  int concurrency = 4;
  std::size_t max_context = 8;
  int max_output_tokens = 0;  // 0: 16 per single-quality call, 64 for all four
  BackoffPolicy backoff{};
  Sleeper sleeper = real_sleeper();
};

/// One LLM call: a turn and either one quality or all four.
struct PlannedPrompt {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  std::string source_split;
  std::optional<Quality> quality;  // nullopt: all four in one call
  std::string prompt;
};

/// Exactly the prompts cmd_eval sends, in output order.
std::vector<PlannedPrompt> plan_eval(const EvalConfig& config);

struct EvalSummary {
  std::size_t planned_calls = 0;
  std::size_t skipped_calls = 0;  // already present from an earlier run
  std::size_t records = 0;        // total in predictions.jsonl
  double failure_rate = 0.0;
};

/// Writes predictions.jsonl (appending; resumes past existing records) and
/// runlog.jsonl under `out`. `backend` overrides config.backend when set.
EvalSummary cmd_eval(const EvalConfig& config, std::ostream& log,
                     std::shared_ptr<CompletionBackend> backend = nullptr);

// ------------------------------------------------------------- train-ffn

struct TrainFfnConfig {
  fs::path cache;
  std::vector<fs::path> corpora;  // gold scores, joined by (dialogue_id, turn_index)
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  fs::path out;
  TrainConfig train{};
  Eigen::Index hidden = kDefaultHidden;
  std::vector<Quality> qualities{kAllQualities.begin(), kAllQualities.end()};
};

struct TrainFfnSummary {
  std::map<Quality, int> best_epoch;
  std::map<Quality, double> best_val_scc;
};

/// Writes ffn_<Quality>.bin per quality and history.jsonl under `out`.
TrainFfnSummary cmd_train_ffn(const TrainFfnConfig& config, std::ostream& log);

// ---------------------------------------------------------------- report

struct ReportConfig {
  fs::path predictions;
  std::vector<fs::path> gold;
  fs::path out;
};

/// Writes report.json and report.txt under `out`.
CorrelationReport cmd_report(const ReportConfig& config, std::ostream& log);

// --------------------------------------------------------------- helpers

/// Fixed examples are filtered to `quality`; nullopt keeps all of them.
ExamplePolicy parse_example_policy(const std::string& spec, std::optional<Quality> quality);
std::vector<Quality> parse_quality_selection(const std::string& spec);
Corpus load_corpora(const std::vector<fs::path>& paths);
/// Directory: <dir>/<quality_label>.txt (snake case) or <dir>/all_qualities.txt;
/// file: as is.
PromptTemplate resolve_template(const fs::path& path, std::optional<Quality> quality);

}  // namespace turneval
