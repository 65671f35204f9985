// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "turneval/errors.hpp"
#include "turneval/llm_client.hpp"
#include "turneval/metrics.hpp"
#include "turneval/prompt.hpp"
#include "turneval/regressor.hpp"
#include "turneval/store.hpp"

using namespace turneval;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

int run_cli(const std::string& args, const fs::path& stdout_file = "/dev/null") {
  const std::string cmd = std::string(TURNEVAL_CLI) + " " + args + " > '" + stdout_file.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// ------------------------------------------------------------------ 1

std::vector<double> count_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::size_t less = 0, equal = 0;
    for (double x : v) {
      less += x < v[i];
      equal += x == v[i];
    }
    r[i] = 1.0 + static_cast<double>(less) + 0.5 * static_cast<double>(equal - 1);
  }
  return r;
}

std::optional<double> direct_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = static_cast<long double>(x.size());
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

Outcome correlation_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> len(2, 500);
  std::uniform_real_distribution<double> real(-1e3, 1e3);
  std::uniform_int_distribution<int> coarse(0, 6);
  double worst = 0.0;
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = len(rng);
    const bool ties = trial % 2 == 1;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = ties ? coarse(rng) * 0.5 : real(rng);
      y[i] = ties && trial % 4 == 1 ? coarse(rng) : real(rng);
    }
    const auto ps = direct_pearson(count_ranks(x), count_ranks(y));
    const auto pp = direct_pearson(x, y);
    if (!ps || !pp) {
      bool threw = false;
      try {
        spearman(x, y);
      } catch (const UndefinedStatisticError&) {
        threw = true;
      }
      if (!threw) return {false, "undefined case not reported at trial " + std::to_string(trial)};
      continue;
    }
    worst = std::max({worst, std::abs(spearman(x, y) - *ps), std::abs(pearson(x, y) - *pp)});
    ++compared;
  }
  const std::vector<double> a{1, 2, 3, 4}, b{1, 3, 2, 4};
  const double example = spearman(a, b);
  const bool pass = worst < 1e-12 && compared >= 190 && example == 0.8;
  return {pass, std::to_string(compared) + " vectors, max |diff| " + fmt("%.2e", worst) +
                    ", spearman((1,2,3,4),(1,3,2,4)) = " + fmt("%.17g", example)};
}

// ------------------------------------------------------------------ 2

Outcome gradient_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> in_dim(1, 8), hid(1, 16), batch(1, 12);
  double worst = 0.0;
  std::size_t params = 0;
  // Redraw until no pre-activation lies within 1e-2 of a ReLU kink.
  const auto min_preactivation = [](const FeedForward<double>& m, const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd z1 = (m.layers[0].weight * x).colwise() + m.layers[0].bias;
    const Eigen::MatrixXd z2 = (m.layers[1].weight * z1.cwiseMax(0.0)).colwise() + m.layers[1].bias;
    return std::min(z1.cwiseAbs().minCoeff(), z2.cwiseAbs().minCoeff());
  };
  int redraws = 0;
  for (int net = 0; net < 20; ++net) {
    std::normal_distribution<double> g;
    FeedForward<double> m;
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    for (;;) {
      m = init_model<double>(in_dim(rng), Quality::Appropriateness, rng(), hid(rng), hid(rng));
      for (auto& l : m.layers) {
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = 0.2 * g(rng);
      }
      const int n = batch(rng);
      x.resize(m.input_dim(), n);
      y.resize(n);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
      for (int i = 0; i < n; ++i) y(i) = 3.0 + g(rng);
      if (min_preactivation(m, x) > 1e-2) break;
      ++redraws;
    }
    const auto analytic = gradient(m, x, y);
    const auto loss = [&] { return log_cosh_loss(forward_batch(m, x).transpose(), y); };
    const double h = 1e-4;
    const auto check = [&](double* v, const double* gr, Eigen::Index size) {
      for (Eigen::Index i = 0; i < size; ++i) {
        const double orig = v[i];
        v[i] = orig + h;
        const double up = loss();
        v[i] = orig - h;
        const double down = loss();
        v[i] = orig;
        const double numeric = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(gr[i] - numeric) / std::max(std::abs(gr[i]) + std::abs(numeric), 1e-8));
        ++params;
      }
    };
    for (std::size_t l = 0; l < 3; ++l) {
      check(m.layers[l].weight.data(), analytic.grad.layers[l].weight.data(), m.layers[l].weight.size());
      check(m.layers[l].bias.data(), analytic.grad.layers[l].bias.data(), m.layers[l].bias.size());
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 10.0, "20 nets, " + std::to_string(params) + " parameters, max relative error " +
                                           fmt("%.2e", worst) + ", " + fmt("%.2f", secs) + " s (" +
                                           std::to_string(redraws) + " kink-adjacent draws skipped)"};
}

// ------------------------------------------------------------------ 3

Outcome loss_properties() {
  const Eigen::VectorXd p = Eigen::VectorXd::LinSpaced(11, 1, 5);
  const double self = log_cosh_loss(p, p);
  const double one = log_cosh_loss(Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, 1.0));
  const double big = log_cosh_loss(Eigen::VectorXd::Constant(1, 101.0), Eigen::VectorXd::Constant(1, 1.0));
  const bool pass = self == 0.0 && std::abs(one - 0.433780) < 1e-6 && std::isfinite(big) &&
                    std::abs(big - 99.306853) < 1e-6;
  return {pass, "L(p,p) = " + fmt("%g", self) + ", ln cosh 1 = " + fmt("%.7f", one) + ", residual 100 -> " +
                    fmt("%.6f", big)};
}

// ------------------------------------------------------------------ 4

Outcome store_exactness() {
  struct Shape {
    std::size_t n;
    int dim;
  };
  const Shape shapes[] = {{1000, 32}, {2500, 128}, {4000, 300}, {5000, 768}};
  std::mt19937_64 rng(404);
  std::normal_distribution<float> g;
  std::size_t checks = 0, agree = 0;
  for (const auto& s : shapes) {
    std::vector<FewShotExample> entries;
    for (std::size_t i = 0; i < s.n; ++i) {
      Embedding e(s.dim);
      for (int k = 0; k < s.dim; ++k) e(k) = g(rng);
      entries.push_back({"c" + std::to_string(i), "r", kAllQualities[i % 4], 3.0, e, "dev"});
    }
    // Exact copies create similarity ties that only the id rule can break.
    for (std::size_t i = 0; i < s.n / 20; ++i) entries[s.n - 1 - 4 * i].embedding = entries[4 * i].embedding;
    const VectorStore store(entries);
    for (int p = 0; p < 100; ++p) {
      Embedding probe(s.dim);
      if (p % 10 == 0) {
        probe = entries[static_cast<std::size_t>(p) * 4].embedding;
      } else {
        for (int k = 0; k < s.dim; ++k) probe(k) = g(rng);
      }
      const Quality qual = kAllQualities[static_cast<std::size_t>(p) % 4];
      std::vector<std::pair<double, std::size_t>> scan;
      for (std::size_t id = 0; id < entries.size(); ++id) {
        if (entries[id].quality != qual) continue;
        const auto& e = entries[id].embedding;
        double dot = 0, na = 0, nb = 0;
        for (int k = 0; k < s.dim; ++k) {
          dot += double(e(k)) * double(probe(k));
          na += double(e(k)) * double(e(k));
          nb += double(probe(k)) * double(probe(k));
        }
        scan.emplace_back(std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0), id);
      }
      std::stable_sort(scan.begin(), scan.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      for (std::size_t k : {1, 2, 5, 10}) {
        const auto hits = store.nearest(probe, qual, k);
        bool same = hits.size() == std::min(k, scan.size());
        for (std::size_t i = 0; same && i < hits.size(); ++i) same = hits[i].id == scan[i].second;
        ++checks;
        agree += same;
      }
    }
  }
  return {agree == checks, std::to_string(agree) + "/" + std::to_string(checks) +
                               " queries identical to the linear scan (stores of 1000-5000, dim 32-768)"};
}

// ------------------------------------------------------------------ 5

Outcome offline_pipeline() {
  test::TempDir dir("accept5");
  test::write_file(dir / "raw.jsonl", test::raw_corpus_jsonl(50, 2, 55));
  test::write_file(dir / "mapping.json", test::mapping_json());
  if (run_cli("ingest --corpus " + q(dir / "raw.jsonl") + " --mapping " + q(dir / "mapping.json") + " --seed 5 --out " +
              q(dir / "data")) != 0 ||
      run_cli("build-store --corpus " + q(dir / "data" / "corpus.jsonl") + " --embedder mock:48 --out " +
              q(dir / "store")) != 0) {
    return {false, "ingest or build-store failed"};
  }
  const auto gold = load_corpus(dir / "data" / "corpus.jsonl");
  EvalConfig plan;
  plan.corpora = {dir / "data" / "corpus.jsonl"};
  plan.template_path = TURNEVAL_TEMPLATE_DIR;
  plan.examples = "dynamic:2";
  plan.store = dir / "store" / "store.bin";
  plan.embedder = "mock:48";
  const auto calls = plan_eval(plan).size();

  const auto eval_and_report = [&](const std::string& tag, const std::vector<std::size_t>& prose) {
    test::write_echo_oracle(plan, gold, dir / (tag + ".json"), prose);
    const auto out = dir / tag;
    const int rc = run_cli("eval --corpus " + q(dir / "data" / "corpus.jsonl") + " --examples dynamic:2 --store " +
                           q(plan.store) + " --embedder mock:48 --backend mock:oracle:" + (dir / (tag + ".json")).string() +
                           " --out " + q(out),
                       out.string() + ".eval.txt");
    const int rc2 = run_cli("report --predictions " + q(out / "predictions.jsonl") + " --gold " +
                            q(dir / "data" / "corpus.jsonl") + " --out " + q(out / "report"));
    return rc == 0 && rc2 == 0;
  };

  if (!eval_and_report("echo", {})) return {false, "echo run failed"};
  const auto echo_report = nlohmann::json::parse(test::read_file(dir / "echo" / "report" / "report.json"));
  const auto echo_preds = load_predictions(dir / "echo" / "predictions.jsonl");
  const double overall = echo_report.at("overall_avg_scc").is_null() ? -2.0 : echo_report.at("overall_avg_scc").get<double>();
  const auto echo_fail = format_percent(failure_rate(echo_preds));
  const bool echo_log = test::read_file(dir / "echo.eval.txt").find("parse failures: 0.00%") != std::string::npos;

  std::vector<std::size_t> prose;
  for (std::size_t i = 0; i < calls; i += 100) prose.push_back(i + 37);
  if (!eval_and_report("prose", prose)) return {false, "prose run failed"};
  const auto prose_preds = load_predictions(dir / "prose" / "predictions.jsonl");
  const auto prose_fail = format_percent(failure_rate(prose_preds));
  std::size_t malformed = 0, fallback_ok = 0;
  for (const auto& r : prose_preds) {
    if (r.parse_status == ParseStatus::Malformed) {
      ++malformed;
      fallback_ok += r.score == 3.0;
    }
  }
  const bool prose_log = test::read_file(dir / "prose.eval.txt").find("parse failures: 1.00%") != std::string::npos;
  const bool pass = overall == 1.0 && echo_fail == "0.00%" && echo_log && echo_preds.size() == calls &&
                    prose_preds.size() == calls && prose_fail == "1.00%" && prose_log && malformed == prose.size() &&
                    fallback_ok == malformed;
  return {pass, "echo: overall SCC " + fmt("%.4f", overall) + ", " + echo_fail + " fail; prose: " + prose_fail +
                    " fail (" + std::to_string(malformed) + "/" + std::to_string(prose_preds.size()) + "), " +
                    std::to_string(fallback_ok) + " fallbacks at 3.0"};
}

// ------------------------------------------------------------------ 6

Outcome regressor_training() {
  const int n = 5000, dim = 16;
  std::mt19937_64 rng(606);
  std::normal_distribution<double> g;
  Eigen::VectorXd w(dim);
  for (int i = 0; i < dim; ++i) w(i) = g(rng);
  w.normalize();
  Eigen::MatrixXf x(dim, n);
  Eigen::VectorXd y(n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = g(rng);
    x.col(j) = v.cast<float>();
    y(j) = 3.0 + 0.8 * w.dot(v) + 0.1 * g(rng);
  }
  const Eigen::MatrixXf tx = x.leftCols(4000), vx = x.rightCols(1000);
  const Eigen::VectorXd ty = y.head(4000), vy = y.tail(1000);

  TrainConfig c;
  c.batch_size = 2048;
  c.learning_rate = 5e-5;
  c.max_epochs = 200;
  c.patience = 20;
  c.optimizer = Optimizer::Adam;
  c.seed = 6;
  const auto t0 = Clock::now();
  const auto r = train(init_model<float>(dim, Quality::Appropriateness, 7, 1024, 1024), tx, ty, vx, vy, c);
  const double secs = seconds_since(t0);

  double best = -2.0;
  int best_epoch = 0;
  for (const auto& h : r.history) {
    if (h.val_scc && *h.val_scc > best) {
      best = *h.val_scc;
      best_epoch = h.epoch;
    }
  }
  const Eigen::VectorXd pred = forward_batch(r.model, vx).transpose().cast<double>();
  const double snapshot = spearman(pred, vy);
  const bool pass = best > 0.9 && r.best_epoch == best_epoch && snapshot == best && secs < 300.0;
  return {pass, "val SCC " + fmt("%.4f", best) + " at epoch " + std::to_string(r.best_epoch) + " of " +
                    std::to_string(r.history.size()) + ", snapshot SCC " + fmt("%.4f", snapshot) + ", " +
                    fmt("%.1f", secs) + " s"};
}

// ------------------------------------------------------------------ 7

Outcome rescaling_fixture() {
  const auto spec = parse_mapping_spec(
      R"({"fedturn": {"Appropriateness": {"terms": [{"name": "overall", "weight": 1.0}], "source_range": [0, 2.2]}}})");
  Corpus c{{"f", "fedturn", {}}};
  for (double v : {0.0, 2.2, 1.1}) c[0].turns.push_back({Speaker::User, "t", {{"overall", v}}, {}});
  const auto mapped = map_annotations(c, spec).dialogues[0].turns;
  const double a = mapped[0].scores.at(Quality::Appropriateness);
  const double b = mapped[1].scores.at(Quality::Appropriateness);
  const double m = mapped[2].scores.at(Quality::Appropriateness);
  return {a == 1.0 && b == 5.0 && m == 3.0,
          "0 -> " + fmt("%.17g", a) + ", 2.2 -> " + fmt("%.17g", b) + ", 1.1 -> " + fmt("%.17g", m)};
}

// ------------------------------------------------------------------ 8

Outcome prompt_round_trip() {
  const auto tmpl = load_template(fs::path(TURNEVAL_TEMPLATE_DIR) / "appropriateness.txt");
  MockEmbeddingProvider embedder(24);
  std::vector<FewShotExample> entries;
  for (int i = 0; i < 12; ++i) {
    const std::string ctx = "user: example " + std::to_string(i);
    const std::string resp = "reply " + std::to_string(i);
    entries.push_back({ctx, resp, Quality::Appropriateness, 1.0 + i % 5, embed_text(embedder, example_key_text(ctx, resp)),
                       "dev"});
  }
  const VectorStore store(entries);
  const std::vector<DialogueTurn> context{{Speaker::User, "Do you like jazz?", {}, {}},
                                          {Speaker::System, "I love it.", {}, {}}};
  const std::string response = "Which artists do you listen to?";
  const auto probe = embed_text(embedder, example_key_text(format_context(context), response));
  const auto examples = select_examples(DynamicExamples{2}, &store, Quality::Appropriateness, &probe);
  const auto prompt = render_prompt(tmpl, Quality::Appropriateness, context, response, examples);

  std::string trimmed = prompt;
  while (!trimmed.empty() && trimmed.back() == '\n') trimmed.pop_back();
  const auto final_line = trimmed.substr(trimmed.rfind('\n') + 1);

  LlmClient client(make_oracle_mock({{to_hex(sha256(prompt)), "3.7"}}, "no"));
  const auto reply = client.complete({prompt, 16, 0.0, "mock"});
  const auto parsed = parse_score(reply.text);

  std::mt19937_64 rng(808);
  const std::string noise[] = {"\n", "\n\n\n", " ", "\t", " \n", "\r\n", "\n \n\t\n"};
  std::uniform_int_distribution<std::size_t> pick(0, std::size(noise) - 1), edits(1, 20);
  int idempotent = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::string text = prompt;
    for (std::size_t e = edits(rng); e > 0; --e) {
      std::uniform_int_distribution<std::size_t> pos(0, text.size());
      text.insert(pos(rng), noise[pick(rng)]);
    }
    const auto once = normalize_newlines(text);
    idempotent += normalize_newlines(once) == once;
  }
  const bool pass = examples.size() == 2 && final_line == "Appropriateness Score:" && parsed.parsed() &&
                    *parsed.score == 3.7 && idempotent == 1000;
  return {pass, std::to_string(examples.size()) + " examples, final line \"" + final_line + "\", reply parses to " +
                    (parsed.parsed() ? fmt("%g", *parsed.score) : std::string("malformed")) + ", idempotent " +
                    std::to_string(idempotent) + "/1000"};
}

// ------------------------------------------------------------------ 9

Outcome determinism() {
  test::TempDir dir("accept9");
  test::write_file(dir / "raw.jsonl", test::raw_corpus_jsonl(30, 3, 99));
  test::write_file(dir / "mapping.json", test::mapping_json());
  for (const char* run : {"a", "b"}) {
    const auto out = dir / run;
    const bool ok =
        run_cli("ingest --corpus " + q(dir / "raw.jsonl") + " --mapping " + q(dir / "mapping.json") + " --seed 11 --out " +
                q(out / "data")) == 0 &&
        run_cli("build-store --corpus " + q(out / "data" / "train.jsonl") + " --embedder mock:32:4 --out " +
                q(out / "store")) == 0 &&
        run_cli("eval --corpus " + q(out / "data" / "val.jsonl") + " --examples dynamic:2 --store " +
                q(out / "store" / "store.bin") + " --embedder mock:32:4 --backend mock:const:4.2 --seed 11" +
                " --concurrency 4 --out " + q(out / "single")) == 0 &&
        run_cli("eval --corpus " + q(out / "data" / "val.jsonl") + " --all-qualities --examples dynamic:2 --store " +
                q(out / "store" / "store.bin") + " --embedder mock:32:4 --backend mock:const:3.5 --seed 11" +
                " --concurrency 4 --out " + q(out / "all")) == 0 &&
        run_cli("report --predictions " + q(out / "single" / "predictions.jsonl") + " --gold " +
                q(out / "data" / "corpus.jsonl") + " --out " + q(out / "report")) == 0;
    if (!ok) return {false, std::string("run ") + run + " failed"};
  }
  const char* files[] = {"data/manifest.json",    "store/store.bin",   "single/predictions.jsonl",
                         "all/predictions.jsonl", "report/report.json", "report/report.txt"};
  int same = 0;
  for (const char* f : files) same += test::read_file(dir / "a" / f) == test::read_file(dir / "b" / f);
  const bool nonempty = !test::read_file(dir / "a" / "single" / "predictions.jsonl").empty();
  return {same == static_cast<int>(std::size(files)) && nonempty,
          std::to_string(same) + "/" + std::to_string(std::size(files)) + " output files byte-identical"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"correlation oracle equivalence", correlation_oracle},
      {"gradient correctness", gradient_check},
      {"loss properties", loss_properties},
      {"vector-store exactness", store_exactness},
      {"end-to-end offline pipeline", offline_pipeline},
      {"regressor training sanity", regressor_training},
      {"rescaling fixture", rescaling_fixture},
      {"prompt round-trip", prompt_round_trip},
      {"determinism suite", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << i + 1 << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size()
            << " acceptance criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
