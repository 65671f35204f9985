#include "turneval/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "turneval/metrics.hpp"

namespace turneval {

using nlohmann::ordered_json;

namespace {

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) throw UsageError("--out is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

Corpus load_corpora(const std::vector<fs::path>& paths) {
  if (paths.empty()) throw UsageError("at least one --corpus is required");
  Corpus all;
  std::set<std::string> ids;
  for (const auto& p : paths) {
    for (auto& d : load_corpus(p)) {
      if (!ids.insert(d.id).second) {
        throw DataError(p.string() + ": duplicate dialogue id `" + d.id + "` across corpora");
      }
      all.push_back(std::move(d));
    }
  }
  return all;
}

std::vector<Quality> parse_quality_selection(const std::string& spec) {
  if (lower(spec) == "all") return {kAllQualities.begin(), kAllQualities.end()};
  const auto q = parse_quality(spec);
  if (!q) throw UsageError("unknown quality `" + spec + "`");
  return {*q};
}

ExamplePolicy parse_example_policy(const std::string& spec, std::optional<Quality> quality) {
  if (spec == "none") return NoExamples{};
  if (spec.rfind("dynamic:", 0) == 0) {
    try {
      const long k = std::stol(spec.substr(8));
      if (k < 1) throw UsageError("dynamic k must be >= 1");
      return DynamicExamples{static_cast<std::size_t>(k)};
    } catch (const std::logic_error&) {
      throw UsageError("bad --examples value `" + spec + "`");
    }
  }
  if (spec.rfind("fixed:", 0) == 0) {
    FixedExamples fixed;
    for (auto& ex : load_fixed_examples(spec.substr(6))) {
      if (!quality || ex.quality == *quality) fixed.examples.push_back(std::move(ex));
    }
    if (fixed.examples.empty()) {
      throw DataError("fixed examples file has no examples" +
                      (quality ? " for " + std::string(quality_id(*quality)) : std::string()));
    }
    return fixed;
  }
  throw UsageError("bad --examples value `" + spec + "` (none | fixed:<path> | dynamic:<k>)");
}

PromptTemplate resolve_template(const fs::path& path, std::optional<Quality> quality) {
  if (path.empty()) throw UsageError("--template is required");
  fs::path file = path;
  if (fs::is_directory(path)) {
    std::string stem = quality ? lower(quality_label(*quality)) : std::string("all_qualities");
    std::replace(stem.begin(), stem.end(), ' ', '_');
    file = path / (stem + ".txt");
  }
  auto tmpl = load_template(file);
  const auto wanted = quality ? QualityMode::Single : QualityMode::AllFour;
  if (tmpl.mode != wanted) {
    throw DataError(file.string() + ": template mode does not match the requested " +
                    (quality ? "single-quality" : "all-qualities") + " evaluation");
  }
  return tmpl;
}

// ---------------------------------------------------------------- ingest

IngestSummary cmd_ingest(const IngestConfig& config, std::ostream& log) {
  ensure_dir(config.out);
  const auto corpus = load_corpora(config.corpora);
  const auto spec = load_mapping_spec(config.mapping);
  auto mapped = map_annotations(corpus, spec);

  IngestSummary summary;
  summary.dialogues = mapped.dialogues.size();
  summary.warnings = mapped.warnings.size();
  for (const auto& d : mapped.dialogues) {
    for (const auto& t : d.turns) {
      for (const auto& [q, v] : t.scores) ++summary.coverage[q];
    }
  }
  if (summary.coverage.empty()) {
    throw DataError("no turn received a target-quality score; check the mapping spec against the corpus");
  }

  const auto split = split_train_val(mapped.dialogues, config.val_fraction, config.seed);
  summary.train_dialogues = split.train.size();
  summary.val_dialogues = split.val.size();

  save_corpus(mapped.dialogues, config.out / "corpus.jsonl");
  save_corpus(split.train, config.out / "train.jsonl");
  save_corpus(split.val, config.out / "val.jsonl");

  {
    std::ofstream warn(config.out / "mapping_warnings.jsonl", std::ios::trunc);
    for (const auto& w : mapped.warnings) {
      warn << ordered_json{{"dialogue_id", w.dialogue_id},
                           {"turn_index", w.turn_index},
                           {"quality", quality_id(w.quality)},
                           {"missing_annotation", w.missing_annotation}}
                  .dump()
           << '\n';
    }
  }

  ordered_json manifest;
  manifest["seed"] = config.seed;
  manifest["val_fraction"] = config.val_fraction;
  manifest["qualities"] = ordered_json::array();
  manifest["coverage"] = ordered_json::object();
  for (const auto& [q, n] : summary.coverage) {
    manifest["qualities"].push_back(quality_id(q));
    manifest["coverage"][std::string(quality_id(q))] = n;
  }
  manifest["train_ids"] = ordered_json::array();
  for (const auto& d : split.train) manifest["train_ids"].push_back(d.id);
  manifest["val_ids"] = ordered_json::array();
  for (const auto& d : split.val) manifest["val_ids"].push_back(d.id);
  manifest["mapping_warnings"] = summary.warnings;
  write_text(config.out / "manifest.json", manifest.dump(2) + "\n");

  log << "dialogues: " << summary.dialogues << " (train " << summary.train_dialogues << ", val "
      << summary.val_dialogues << ")\n";
  for (Quality q : kAllQualities) {
    const auto it = summary.coverage.find(q);
    log << "  " << quality_id(q) << ": " << (it == summary.coverage.end() ? 0 : it->second)
        << " scored turns\n";
  }
  if (summary.warnings) log << "mapping warnings: " << summary.warnings << "\n";
  return summary;
}

// ----------------------------------------------------------- build-store

std::vector<FewShotExample> examples_from_corpus(const Corpus& corpus, EmbeddingProvider& embedder,
                                                 std::size_t max_context,
                                                 EmbeddingCache* cache) {
  struct Pending {
    const Dialogue* dialogue;
    std::size_t turn;
    std::string context_text;
  };
  std::vector<Pending> pending;
  std::vector<std::string> texts;
  for (const auto& d : corpus) {
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      if (d.turns[i].scores.empty()) continue;
      const auto ctx = context_window(d, i, max_context);
      pending.push_back({&d, i, format_context(ctx)});
      texts.push_back(example_key_text(pending.back().context_text, d.turns[i].text));
    }
  }

  constexpr std::size_t kBatch = 64;
  std::vector<Embedding> embeddings;
  for (std::size_t b = 0; b < texts.size(); b += kBatch) {
    const auto n = std::min(kBatch, texts.size() - b);
    auto part = embedder.embed_batch(std::span(texts).subspan(b, n));
    for (auto& e : part) embeddings.push_back(std::move(e));
  }

  if (cache) {
    const auto dim = static_cast<Eigen::Index>(embedder.dimension());
    cache->dialogue_ids.clear();
    cache->turn_indices.clear();
    cache->features.resize(static_cast<Eigen::Index>(pending.size()), dim);
    for (std::size_t p = 0; p < pending.size(); ++p) {
      cache->dialogue_ids.push_back(pending[p].dialogue->id);
      cache->turn_indices.push_back(static_cast<std::uint32_t>(pending[p].turn));
      cache->features.row(static_cast<Eigen::Index>(p)) = embeddings[p].transpose();
    }
  }

  std::vector<FewShotExample> out;
  for (std::size_t p = 0; p < pending.size(); ++p) {
    const auto& turn = pending[p].dialogue->turns[pending[p].turn];
    for (const auto& [q, score] : turn.scores) {
      out.push_back({pending[p].context_text, turn.text, q, score, embeddings[p],
                     pending[p].dialogue->source_split});
    }
  }
  return out;
}

VectorStore cmd_build_store(const BuildStoreConfig& config, std::ostream& log) {
  ensure_dir(config.out);
  const auto corpus = load_corpora(config.corpora);
  auto embedder = make_embedding_provider(config.embedder);
  EmbeddingCache cache;
  auto store = build_store(examples_from_corpus(corpus, *embedder, config.max_context, &cache));
  save_store(store, config.out / "store.bin");
  write_embedding_cache(cache, config.out / "embeddings.cache");
  log << "store: " << store.size() << " examples, dimension " << store.dimension() << "\n";
  for (Quality q : kAllQualities) {
    log << "  " << quality_id(q) << ": " << store.partition_size(q) << "\n";
  }
  return store;
}

// ------------------------------------------------------------------ eval

std::vector<PlannedPrompt> plan_eval(const EvalConfig& config) {
  const auto corpus = load_corpora(config.corpora);
  if (config.qualities.empty()) throw UsageError("no quality selected");

  const bool dynamic = config.examples.rfind("dynamic:", 0) == 0;
  std::optional<VectorStore> store;
  std::unique_ptr<EmbeddingProvider> embedder;
  if (dynamic) {
    if (config.store.empty()) throw UsageError("--examples dynamic:<k> needs --store");
    store.emplace(load_store(config.store));
    embedder = make_embedding_provider(config.embedder);
    if (embedder->dimension() != store->dimension()) {
      throw DataError("embedder dimension " + std::to_string(embedder->dimension()) +
                      " does not match store dimension " + std::to_string(store->dimension()));
    }
  }

  // Per-call-kind template and example policy.
  std::vector<std::optional<Quality>> kinds;
  if (config.all_qualities) {
    kinds.push_back(std::nullopt);
  } else {
    for (Quality q : config.qualities) kinds.push_back(q);
  }
  std::vector<PromptTemplate> templates;
  std::vector<ExamplePolicy> policies;
  for (const auto& kind : kinds) {
    templates.push_back(resolve_template(config.template_path, kind));
    policies.push_back(parse_example_policy(config.examples, kind));
  }

  std::vector<PlannedPrompt> plan;
  for (const auto& d : corpus) {
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      const auto ctx = context_window(d, i, config.max_context);
      std::optional<Embedding> probe;
      if (dynamic) probe = embed_text(*embedder, example_key_text(format_context(ctx), d.turns[i].text));
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        const auto examples =
            kinds[k] ? select_examples(policies[k], store ? &*store : nullptr, *kinds[k],
                                       probe ? &*probe : nullptr)
                     : select_examples_all(policies[k], store ? &*store : nullptr,
                                           probe ? &*probe : nullptr);
        plan.push_back({d.id, i, d.source_split, kinds[k],
                        render_prompt(templates[k], kinds[k], ctx, d.turns[i].text, examples)});
      }
    }
  }
  return plan;
}

namespace {

std::vector<PredictionRecord> score_completion(const PlannedPrompt& task, const std::string& text,
                                               const std::vector<Quality>& qualities,
                                               double fallback) {
  std::vector<PredictionRecord> out;
  const auto make = [&](Quality q, const ParseResult& parsed) {
    out.push_back({task.dialogue_id, task.turn_index, q, apply_fallback(parsed, fallback),
                   parsed.status, task.source_split});
  };
  if (task.quality) {
    make(*task.quality, parse_score(text));
  } else {
    const auto parsed = parse_all_qualities(text);
    for (Quality q : qualities) make(q, parsed.at(q));
  }
  return out;
}

std::string record_key(const std::string& id, std::size_t turn, Quality q) {
  return id + '\x1f' + std::to_string(turn) + '\x1f' + std::string(quality_id(q));
}

}  // namespace

EvalSummary cmd_eval(const EvalConfig& config, std::ostream& log,
                     std::shared_ptr<CompletionBackend> backend) {
  ensure_dir(config.out);
  if (!(config.fallback >= kScoreMin && config.fallback <= kScoreMax)) {
    throw UsageError("--fallback must lie in [1,5]");
  }
  if (config.concurrency < 1) throw UsageError("--concurrency must be >= 1");
  if (!backend) backend = make_backend(config.backend);

  const auto predictions_path = config.out / "predictions.jsonl";
  std::set<std::string> done;
  if (fs::exists(predictions_path)) {
    for (const auto& r : load_predictions(predictions_path)) {
      done.insert(record_key(r.dialogue_id, r.turn_index, r.quality));
    }
  }

  const auto plan = plan_eval(config);
  const std::vector<Quality> output_qualities =
      config.all_qualities ? std::vector<Quality>(kAllQualities.begin(), kAllQualities.end())
                           : config.qualities;

  std::vector<const PlannedPrompt*> todo;
  EvalSummary summary;
  summary.planned_calls = plan.size();
  for (const auto& task : plan) {
    bool complete = true;
    if (task.quality) {
      complete = done.contains(record_key(task.dialogue_id, task.turn_index, *task.quality));
    } else {
      for (Quality q : output_qualities) {
        complete = complete && done.contains(record_key(task.dialogue_id, task.turn_index, q));
      }
    }
    if (complete) {
      ++summary.skipped_calls;
    } else {
      todo.push_back(&task);
    }
  }

  RunLog run_log(config.out / "runlog.jsonl");
  LlmClient client(backend, {config.backoff, config.sleeper, config.concurrency, &run_log});
  const int max_tokens =
      config.max_output_tokens > 0 ? config.max_output_tokens : (config.all_qualities ? 64 : 16);

  // Workers complete calls out of order; the writer below emits results
  // strictly in plan order so partial output is always a prefix.
  std::vector<std::optional<std::vector<PredictionRecord>>> results(todo.size());
  std::exception_ptr failure;
  std::size_t failed_index = todo.size();
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  const auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      const auto i = next.fetch_add(1);
      if (i >= todo.size()) return;
      const auto& task = *todo[i];
      try {
        CompletionRequest request{task.prompt, max_tokens, 0.0, backend->name()};
        const auto result = client.complete(request);
        auto records = score_completion(task, result.text, output_qualities, config.fallback);
        std::lock_guard lock(mu);
        results[i] = std::move(records);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
        stop.store(true);
      }
      cv.notify_all();
    }
  };

  const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(config.concurrency),
                                               std::max<std::size_t>(todo.size(), 1));
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);

  {
    std::ofstream out(predictions_path, std::ios::app | std::ios::binary);
    if (!out) throw DataError("cannot write " + predictions_path.string());
    for (std::size_t i = 0; i < todo.size(); ++i) {
      std::unique_lock lock(mu);
      cv.wait(lock, [&] { return results[i].has_value() || failed_index <= i; });
      if (!results[i]) break;
      const auto records = std::move(*results[i]);
      lock.unlock();
      for (const auto& r : records) out << prediction_to_json_line(r) << '\n';
      out.flush();
    }
  }
  for (auto& t : threads) t.join();
  if (failure) {
    log << "backend failure after " << failed_index << " of " << todo.size()
        << " pending calls; partial predictions kept in " << predictions_path << "\n";
    std::rethrow_exception(failure);
  }

  const auto all = load_predictions(predictions_path);
  summary.records = all.size();
  summary.failure_rate = all.empty() ? 0.0 : failure_rate(all);
  log << "calls: " << todo.size() << " made, " << summary.skipped_calls << " resumed\n";
  log << "records: " << summary.records << ", parse failures: " << format_percent(summary.failure_rate)
      << "\n";
  return summary;
}

// ------------------------------------------------------------- train-ffn

TrainFfnSummary cmd_train_ffn(const TrainFfnConfig& config, std::ostream& log) {
  ensure_dir(config.out);
  const auto cache = read_embedding_cache(config.cache);
  const auto corpus = load_corpora(config.corpora);
  const auto split = split_train_val(corpus, config.val_fraction, config.seed);

  std::map<std::pair<std::string, std::size_t>, const QualityScores*> gold;
  std::set<std::string> val_ids;
  for (const auto& d : split.val) val_ids.insert(d.id);
  for (const auto& d : corpus) {
    for (std::size_t i = 0; i < d.turns.size(); ++i) gold[{d.id, i}] = &d.turns[i].scores;
  }

  using Matrix = FeedForward<float>::Matrix;
  const auto dim = cache.features.cols();
  TrainFfnSummary summary;
  std::ofstream history(config.out / "history.jsonl", std::ios::trunc);
  if (!history) throw DataError("cannot write history.jsonl");

  for (Quality q : config.qualities) {
    std::vector<Eigen::Index> train_rows, val_rows;
    std::vector<double> train_t, val_t;
    for (Eigen::Index r = 0; r < cache.features.rows(); ++r) {
      const auto it = gold.find({cache.dialogue_ids[static_cast<std::size_t>(r)],
                                 cache.turn_indices[static_cast<std::size_t>(r)]});
      if (it == gold.end()) continue;
      const auto s = it->second->find(q);
      if (s == it->second->end()) continue;
      if (val_ids.contains(cache.dialogue_ids[static_cast<std::size_t>(r)])) {
        val_rows.push_back(r);
        val_t.push_back(s->second);
      } else {
        train_rows.push_back(r);
        train_t.push_back(s->second);
      }
    }
    if (train_rows.empty() || val_rows.empty()) {
      log << quality_id(q) << ": no gold scores on one side of the split, skipped\n";
      continue;
    }
    const auto gather = [&](const std::vector<Eigen::Index>& rows) {
      Matrix m(dim, static_cast<Eigen::Index>(rows.size()));
      for (std::size_t j = 0; j < rows.size(); ++j) {
        m.col(static_cast<Eigen::Index>(j)) = cache.features.row(rows[j]).transpose();
      }
      return m;
    };
    const Eigen::VectorXd ty = Eigen::Map<const Eigen::VectorXd>(train_t.data(), static_cast<Eigen::Index>(train_t.size()));
    const Eigen::VectorXd vy = Eigen::Map<const Eigen::VectorXd>(val_t.data(), static_cast<Eigen::Index>(val_t.size()));

    auto model = init_model<float>(dim, q, config.seed, config.hidden, config.hidden);
    const auto result = train(std::move(model), gather(train_rows), ty, gather(val_rows), vy, config.train);
    save_model(result.model.cast<double>(), config.out / ("ffn_" + std::string(quality_id(q)) + ".bin"));

    for (const auto& h : result.history) {
      ordered_json line = {{"quality", quality_id(q)},
                           {"epoch", h.epoch},
                           {"train_loss", h.train_loss},
                           {"val_loss", h.val_loss}};
      line["val_scc"] = h.val_scc ? ordered_json(*h.val_scc) : ordered_json(nullptr);
      history << line.dump() << '\n';
    }
    summary.best_epoch[q] = result.best_epoch;
    if (result.best_epoch > 0) {
      summary.best_val_scc[q] = *result.history[static_cast<std::size_t>(result.best_epoch - 1)].val_scc;
    }
    log << quality_id(q) << ": " << result.history.size() << " epochs, best epoch "
        << result.best_epoch << ", val SCC "
        << (result.best_epoch > 0 ? std::to_string(summary.best_val_scc[q]) : std::string("-")) << "\n";
  }
  if (summary.best_epoch.empty()) throw DataError("no quality had trainable data");
  return summary;
}

// ---------------------------------------------------------------- report

CorrelationReport cmd_report(const ReportConfig& config, std::ostream& log) {
  ensure_dir(config.out);
  const auto predictions = load_predictions(config.predictions);
  const auto gold = load_corpora(config.gold);
  auto report = build_report(predictions, gold);
  write_text(config.out / "report.json", report_to_json(report));
  const auto table = report_to_table(report);
  write_text(config.out / "report.txt", table);
  log << table;
  for (const auto& c : report.cells) {
    if (!c.diagnostic.empty()) {
      log << "note: " << quality_id(c.quality) << "/" << c.split << ": " << c.diagnostic << "\n";
    }
  }
  if (!predictions.empty()) log << "parse failures: " << format_percent(failure_rate(predictions)) << "\n";
  return report;
}

}  // namespace turneval
