#pragma once

#include <cstdio>
#include <map>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "test_util.hpp"
#include "turneval/binary_io.hpp"
#include "turneval/pipeline.hpp"

namespace turneval::test {

/// Raw annotated corpus with two source splits: "dd" annotates on [1,5],
/// "fed" on [0,2.2] (so rescaling matters). Every turn maps to all four
/// qualities.
inline std::string raw_corpus_jsonl(int dialogues, int turns, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> five(1.0, 5.0), fed(0.0, 2.2);
  static const char* kWords[] = {"coffee", "weather", "movie",  "music", "travel", "books",
                                 "dinner", "soccer",  "garden", "cats",  "school", "rain"};
  std::uniform_int_distribution<std::size_t> word(0, std::size(kWords) - 1);
  std::string out;
  for (int d = 0; d < dialogues; ++d) {
    const bool is_fed = d % 3 == 2;
    nlohmann::json rec;
    rec["id"] = (is_fed ? "fed-" : "dd-") + std::to_string(d);
    rec["source_split"] = is_fed ? "fed" : "dd";
    rec["turns"] = nlohmann::json::array();
    for (int t = 0; t < turns; ++t) {
      nlohmann::json turn;
      turn["speaker"] = t % 2 ? "system" : "user";
      turn["text"] = std::string("turn ") + std::to_string(t) + " of " + std::to_string(d) + " about " + kWords[word(rng)] + " and " +
                     kWords[word(rng)];
      auto draw = [&] { return std::round((is_fed ? fed(rng) : five(rng)) * 100.0) / 100.0; };
      turn["annotations"] = {{"appropriate", draw()},
                             {"informative", draw()},
                             {"grammatical", draw()},
                             {"relevant", draw()},
                             {"engaging", draw()}};
      rec["turns"].push_back(turn);
    }
    out += rec.dump() + "\n";
  }
  return out;
}

inline std::string mapping_json() {
  const auto split = [](double lo, double hi) {
    const auto one = [&](const char* name) {
      return nlohmann::json{{"terms", {{{"name", name}, {"weight", 1.0}}}}, {"source_range", {lo, hi}}};
    };
    nlohmann::json rich = {{"terms", {{{"name", "informative"}, {"weight", 0.5}}, {{"name", "engaging"}, {"weight", 0.5}}}},
                           {"source_range", {lo, hi}}};
    return nlohmann::json{{"Appropriateness", one("appropriate")},
                          {"ContentRichness", rich},
                          {"GrammaticalCorrectness", one("grammatical")},
                          {"Relevance", one("relevant")}};
  };
  return nlohmann::json{{"dd", split(1.0, 5.0)}, {"fed", split(0.0, 2.2)}}.dump(2);
}

inline std::string score_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Lookup file for the oracle mock: each planned prompt maps to the gold
/// score of its turn. Prompts whose index is in `prose_at` get a
/// conversational reply instead.
inline void write_echo_oracle(const EvalConfig& config, const Corpus& gold, const std::filesystem::path& out,
                              const std::vector<std::size_t>& prose_at = {}) {
  std::map<std::pair<std::string, std::size_t>, const QualityScores*> scores;
  for (const auto& d : gold) {
    for (std::size_t i = 0; i < d.turns.size(); ++i) scores[{d.id, i}] = &d.turns[i].scores;
  }
  nlohmann::json lookup;
  lookup["default"] = "no idea";
  lookup["responses"] = nlohmann::json::object();
  const auto plan = plan_eval(config);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& p = plan[i];
    const auto& s = *scores.at({p.dialogue_id, p.turn_index});
    std::string reply;
    if (std::find(prose_at.begin(), prose_at.end(), i) != prose_at.end()) {
      reply = "I think that sounds great! What else do you like to do?";
    } else if (p.quality) {
      reply = score_text(s.at(*p.quality));
    } else {
      for (Quality q : kAllQualities) reply += std::string(quality_label(q)) + " Score: " + score_text(s.at(q)) + "\n";
    }
    lookup["responses"][to_hex(sha256(p.prompt))] = reply;
  }
  write_file(out, lookup.dump());
}

}  // namespace turneval::test
