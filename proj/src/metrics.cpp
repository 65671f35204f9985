#include "turneval/metrics.hpp"

#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace turneval {

const CorrelationCell* CorrelationReport::find(Quality q, std::string_view split) const {
  for (const auto& c : cells) {
    if (c.quality == q && c.split == split) return &c;
  }
  return nullptr;
}

namespace {

struct GoldTurn {
  const std::string* split;
  const QualityScores* scores;
};

using TurnKey = std::pair<std::string, std::size_t>;

std::string key_string(const TurnKey& k) { return k.first + "#" + std::to_string(k.second); }

CorrelationCell make_cell(Quality q, std::string split, const std::vector<double>& pred,
                          const std::vector<double>& gold) {
  CorrelationCell cell;
  cell.quality = q;
  cell.split = std::move(split);
  cell.n = pred.size();
  try {
    cell.scc = spearman(pred, gold);
    cell.pcc = pearson(pred, gold);
  } catch (const UndefinedStatisticError& e) {
    cell.scc.reset();
    cell.pcc.reset();
    cell.diagnostic = e.what();
  }
  return cell;
}

}  // namespace

CorrelationReport build_report(std::span<const PredictionRecord> predictions, const Corpus& gold) {
  std::map<TurnKey, GoldTurn> gold_turns;
  for (const auto& d : gold) {
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      gold_turns.emplace(TurnKey{d.id, i}, GoldTurn{&d.source_split, &d.turns[i].scores});
    }
  }

  // (quality, key) -> (prediction, gold); the ordered map fixes the summation
  // order independently of the prediction file order.
  std::map<std::pair<Quality, TurnKey>, std::pair<double, double>> joined;
  std::map<std::pair<Quality, TurnKey>, const std::string*> split_of;
  std::vector<std::string> unjoinable;
  for (const auto& p : predictions) {
    TurnKey key{p.dialogue_id, p.turn_index};
    const auto it = gold_turns.find(key);
    if (it == gold_turns.end()) {
      unjoinable.push_back(key_string(key));
      continue;
    }
    const auto g = it->second.scores->find(p.quality);
    if (g == it->second.scores->end()) continue;
    if (!joined.emplace(std::pair{p.quality, key}, std::pair{p.score, g->second}).second) {
      throw DataError("duplicate prediction for " + key_string(key) + " " +
                      std::string(quality_id(p.quality)));
    }
    split_of[{p.quality, key}] = it->second.split;
  }
  if (!unjoinable.empty()) {
    throw UnjoinableError(std::to_string(unjoinable.size()) +
                              " prediction(s) do not match any gold turn",
                          std::move(unjoinable));
  }
  if (joined.empty()) throw DataError("no prediction joins a gold score");

  CorrelationReport report;
  for (Quality q : kAllQualities) {
    std::vector<double> all_pred, all_gold;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> per_split;
    for (const auto& [k, pg] : joined) {
      if (k.first != q) continue;
      all_pred.push_back(pg.first);
      all_gold.push_back(pg.second);
      auto& bucket = per_split[*split_of.at(k)];
      bucket.first.push_back(pg.first);
      bucket.second.push_back(pg.second);
    }
    if (all_pred.empty()) continue;
    report.cells.push_back(make_cell(q, std::string(kPooledSplit), all_pred, all_gold));
    for (const auto& [split, pg] : per_split) {
      report.cells.push_back(make_cell(q, split, pg.first, pg.second));
    }
  }

  double sum = 0.0;
  int have = 0;
  for (Quality q : kAllQualities) {
    const auto* cell = report.find(q, kPooledSplit);
    if (cell && cell->scc) {
      sum += *cell->scc;
      ++have;
    }
  }
  if (have == 4) report.overall_avg_scc = sum / 4.0;
  return report;
}

std::string report_to_json(const CorrelationReport& report) {
  using nlohmann::ordered_json;
  ordered_json cells = ordered_json::array();
  for (const auto& c : report.cells) {
    ordered_json cell = {{"quality", quality_id(c.quality)}, {"split", c.split}};
    cell["scc"] = c.scc ? ordered_json(*c.scc) : ordered_json(nullptr);
    cell["pcc"] = c.pcc ? ordered_json(*c.pcc) : ordered_json(nullptr);
    cell["n"] = c.n;
    cells.push_back(std::move(cell));
  }
  ordered_json root = {{"cells", std::move(cells)}};
  root["overall_avg_scc"] =
      report.overall_avg_scc ? ordered_json(*report.overall_avg_scc) : ordered_json(nullptr);
  return root.dump(2) + "\n";
}

namespace {

std::string fmt(const std::optional<double>& v, const char* spec) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), spec, *v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

void table(std::ostringstream& out, const CorrelationReport& report, const char* title,
           std::optional<double> CorrelationCell::*field) {
  std::vector<std::string> splits{std::string(kPooledSplit)};
  std::set<std::string> seen{std::string(kPooledSplit)};
  for (const auto& c : report.cells) {
    if (seen.insert(c.split).second) splits.push_back(c.split);
  }
  std::sort(splits.begin() + 1, splits.end());

  std::size_t split_width = 8;
  for (const auto& s : splits) split_width = std::max(split_width, s.size() + 2);

  out << title << '\n';
  out << pad("Split", split_width);
  for (Quality q : kAllQualities) out << pad(std::string(quality_label(q)), 25);
  out << '\n';
  for (const auto& s : splits) {
    out << pad(s, split_width);
    for (Quality q : kAllQualities) {
      const auto* c = report.find(q, s);
      out << pad(c ? fmt(c->*field, "%.3f") : "-", 25);
    }
    out << '\n';
  }
}

}  // namespace

std::string report_to_table(const CorrelationReport& report) {
  std::ostringstream out;
  table(out, report, "Spearman correlation (SCC)", &CorrelationCell::scc);
  out << '\n';
  table(out, report, "Pearson correlation (PCC)", &CorrelationCell::pcc);
  out << '\n';
  out << pad("Avg. Spearman", 16) << fmt(report.overall_avg_scc, "%.4f") << '\n';
  std::string text = out.str();
  // trailing pad spaces
  std::string cleaned;
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    line.erase(line.find_last_not_of(' ') + 1);
    cleaned += line + '\n';
  }
  return cleaned;
}

}  // namespace turneval
