#include "turneval/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "turneval/errors.hpp"

namespace turneval {

using nlohmann::json;

std::string_view speaker_tag(Speaker s) {
  return s == Speaker::User ? "user" : "system";
}

namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

DialogueTurn parse_turn(const json& j) {
  DialogueTurn turn;
  if (!j.is_object()) throw DataError("turn is not an object");
  if (!j.contains("text") || !j["text"].is_string()) {
    throw DataError("turn missing string field `text`");
  }
  turn.text = j["text"].get<std::string>();
  if (blank(turn.text)) throw DataError("turn text is empty");

  if (!j.contains("speaker") || !j["speaker"].is_string()) {
    throw DataError("turn missing string field `speaker`");
  }
  const auto speaker = j["speaker"].get<std::string>();
  if (speaker == "user") {
    turn.speaker = Speaker::User;
  } else if (speaker == "system") {
    turn.speaker = Speaker::System;
  } else {
    throw DataError("unknown speaker `" + speaker + "`");
  }

  if (j.contains("annotations")) {
    const auto& ann = j["annotations"];
    if (!ann.is_object()) throw DataError("`annotations` is not an object");
    for (const auto& [name, value] : ann.items()) {
      if (!value.is_number()) throw DataError("annotation `" + name + "` is not a number");
      const double v = value.get<double>();
      if (!std::isfinite(v)) throw DataError("annotation `" + name + "` is not finite");
      turn.annotations.emplace(name, v);
    }
  }
  if (j.contains("scores")) {
    for (const auto& [name, value] : j["scores"].items()) {
      const auto q = parse_quality(name);
      if (!q) throw DataError("unknown quality `" + name + "` in scores");
      const double v = value.get<double>();
      if (!(v >= kScoreMin && v <= kScoreMax)) {
        throw DataError("score for `" + name + "` outside [1,5]");
      }
      turn.scores.emplace(*q, v);
    }
  }
  return turn;
}

Dialogue parse_record(const json& j) {
  if (!j.is_object()) throw DataError("record is not an object");
  Dialogue d;
  if (!j.contains("id") || !j["id"].is_string()) throw DataError("missing string field `id`");
  if (!j.contains("source_split") || !j["source_split"].is_string()) {
    throw DataError("missing string field `source_split`");
  }
  if (!j.contains("turns") || !j["turns"].is_array()) throw DataError("missing array field `turns`");
  d.id = j["id"].get<std::string>();
  d.source_split = j["source_split"].get<std::string>();
  for (const auto& t : j["turns"]) d.turns.push_back(parse_turn(t));
  if (d.turns.empty()) throw DataError("dialogue has no turns");
  return d;
}

}  // namespace

Corpus parse_corpus(std::istream& in, const std::string& source_name) {
  Corpus corpus;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    try {
      auto d = parse_record(json::parse(line));
      if (!ids.insert(d.id).second) throw DataError("duplicate dialogue id `" + d.id + "`");
      corpus.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw DataError(source_name + ":" + std::to_string(line_no) +
                      ": malformed record: " + e.what());
    } catch (const DataError& e) {
      throw DataError(source_name + ":" + std::to_string(line_no) +
                      ": malformed record: " + e.what());
    }
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus " + path.string());
  return parse_corpus(in, path.string());
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& d : corpus) {
    json turns = json::array();
    for (const auto& t : d.turns) {
      json jt = {{"speaker", speaker_tag(t.speaker)}, {"text", t.text}};
      jt["annotations"] = json::object();
      for (const auto& [k, v] : t.annotations) jt["annotations"][k] = v;
      if (!t.scores.empty()) {
        jt["scores"] = json::object();
        for (const auto& [q, v] : t.scores) jt["scores"][std::string(quality_id(q))] = v;
      }
      turns.push_back(std::move(jt));
    }
    json rec = {{"id", d.id}, {"source_split", d.source_split}, {"turns", std::move(turns)}};
    out << rec.dump() << '\n';
  }
}

MappingSpec parse_mapping_spec(std::string_view json_text) {
  MappingSpec spec;
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed mapping spec: ") + e.what());
  }
  if (!root.is_object()) throw DataError("mapping spec must be an object");
  for (const auto& [split, qualities] : root.items()) {
    for (const auto& [qname, body] : qualities.items()) {
      const auto q = parse_quality(qname);
      if (!q) throw DataError("mapping `" + split + "`: unknown quality `" + qname + "`");
      QualityMapping m;
      try {
        for (const auto& term : body.at("terms")) {
          MappingTerm t{term.at("name").get<std::string>(), term.at("weight").get<double>()};
          if (!std::isfinite(t.weight)) throw DataError("non-finite weight");
          m.terms.push_back(std::move(t));
        }
        const auto& range = body.at("source_range");
        if (!range.is_array() || range.size() != 2) throw DataError("source_range must be [low, high]");
        m.source_range = {range[0].get<double>(), range[1].get<double>()};
      } catch (const json::exception& e) {
        throw DataError("mapping `" + split + "/" + qname + "`: " + e.what());
      }
      if (m.terms.empty()) throw DataError("mapping `" + split + "/" + qname + "` has no terms");
      if (!(m.source_range.low < m.source_range.high)) {
        throw DataError("mapping `" + split + "/" + qname + "`: source_range low must be < high");
      }
      spec.splits[split][*q] = std::move(m);
    }
  }
  return spec;
}

MappingSpec load_mapping_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mapping spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_mapping_spec(ss.str());
}

double rescale_scores(double value, ScoreRange source, ScoreRange target) {
  if (!(source.low < source.high)) throw DataError("degenerate source range");
  if (!std::isfinite(value)) throw DataError("non-finite value");
  const double t = (value - source.low) / (source.high - source.low);
  const double mapped = target.low + t * (target.high - target.low);
  return std::clamp(mapped, target.low, target.high);
}

MappedCorpus map_annotations(const Corpus& corpus, const MappingSpec& spec) {
  MappedCorpus out;
  out.dialogues = corpus;
  for (auto& d : out.dialogues) {
    const auto split = spec.splits.find(d.source_split);
    if (split == spec.splits.end()) continue;
    for (std::size_t ti = 0; ti < d.turns.size(); ++ti) {
      auto& turn = d.turns[ti];
      for (const auto& [quality, mapping] : split->second) {
        double raw = 0.0;
        std::vector<std::string> missing;
        for (const auto& term : mapping.terms) {
          const auto it = turn.annotations.find(term.name);
          if (it == turn.annotations.end()) {
            missing.push_back(term.name);
          } else {
            raw += term.weight * it->second;
          }
        }
        if (missing.empty()) {
          turn.scores[quality] = rescale_scores(raw, mapping.source_range);
        } else if (missing.size() < mapping.terms.size()) {
          for (auto& name : missing) {
            out.warnings.push_back({d.id, ti, quality, std::move(name)});
          }
        }
      }
    }
  }
  return out;
}

TrainValSplit split_train_val(const Corpus& corpus, double val_fraction,
                              std::uint64_t seed) {
  if (corpus.empty()) throw DataError("cannot split an empty corpus");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw DataError("val_fraction must lie in (0,1)");
  }
  const auto n = corpus.size();
  const auto n_val = static_cast<std::size_t>(std::nearbyint(val_fraction * static_cast<double>(n)));
  if (n_val == 0 || n_val == n) {
    throw DataError("val_fraction " + std::to_string(val_fraction) + " leaves an empty split for " +
                    std::to_string(n) + " dialogues");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<bool> is_val(n, false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;

  TrainValSplit split;
  for (std::size_t i = 0; i < n; ++i) {
    (is_val[i] ? split.val : split.train).push_back(corpus[i]);
  }
  return split;
}

std::vector<DialogueTurn> context_window(const Dialogue& dialogue,
                                         std::size_t turn_index,
                                         std::size_t max_turns) {
  if (turn_index >= dialogue.turns.size()) {
    throw DataError("turn index " + std::to_string(turn_index) + " out of bounds for dialogue `" +
                    dialogue.id + "`");
  }
  const std::size_t begin = turn_index > max_turns ? turn_index - max_turns : 0;
  return {dialogue.turns.begin() + static_cast<std::ptrdiff_t>(begin),
          dialogue.turns.begin() + static_cast<std::ptrdiff_t>(turn_index)};
}

}  // namespace turneval
