#include "turneval/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

#include "turneval/errors.hpp"

namespace turneval {

std::string_view parse_status_name(ParseStatus s) {
  return s == ParseStatus::Parsed ? "parsed" : "malformed";
}

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

/// Locates and converts the first plain decimal token ("4", "4.5", ".5",
/// "-1"). Exponents are not part of the token.
std::optional<double> first_number(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const bool starts = is_digit(text[i]) ||
                        (text[i] == '.' && i + 1 < text.size() && is_digit(text[i + 1]));
    if (!starts) continue;
    std::size_t begin = i;
    if (begin > 0 && text[begin - 1] == '-' &&
        (begin == 1 || !std::isalnum(static_cast<unsigned char>(text[begin - 2])))) {
      --begin;
    }
    std::size_t end = i;
    while (end < text.size() && is_digit(text[end])) ++end;
    if (end < text.size() && text[end] == '.') {
      ++end;
      while (end < text.size() && is_digit(text[end])) ++end;
    }
    double value = 0.0;
    const auto res = std::from_chars(text.data() + begin, text.data() + end, value,
                                     std::chars_format::fixed);
    if (res.ec != std::errc()) return std::nullopt;
    return value;
  }
  return std::nullopt;
}

}  // namespace

ParseResult parse_score(std::string_view text, ScoreRange range) {
  ParseResult result;
  result.raw_text = std::string(text);
  const auto value = first_number(text);
  if (!value || !std::isfinite(*value)) return result;
  const double slack = 0.5 * (range.high - range.low);
  if (*value < range.low - slack || *value > range.high + slack) return result;
  result.status = ParseStatus::Parsed;
  result.score = std::clamp(*value, range.low, range.high);
  return result;
}

std::map<Quality, ParseResult> parse_all_qualities(std::string_view text, ScoreRange range) {
  static const std::map<Quality, std::regex> kLabels = [] {
    std::map<Quality, std::regex> m;
    m.emplace(Quality::Appropriateness, std::regex("appropriateness", std::regex::icase));
    m.emplace(Quality::ContentRichness, std::regex("content[ _-]*richness", std::regex::icase));
    m.emplace(Quality::GrammaticalCorrectness,
              std::regex("grammatical[ _-]*correctness", std::regex::icase));
    m.emplace(Quality::Relevance, std::regex("relevance", std::regex::icase));
    return m;
  }();

  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    lines.emplace_back(text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }

  std::map<Quality, ParseResult> out;
  for (const auto& [quality, label] : kLabels) {
    ParseResult result;
    result.raw_text = std::string(text);
    for (const auto& line : lines) {
      std::smatch m;
      if (!std::regex_search(line, m, label)) continue;
      result = parse_score(std::string_view(line).substr(static_cast<std::size_t>(m.position(0) + m.length(0))), range);
      result.raw_text = std::string(text);
      break;
    }
    out.emplace(quality, std::move(result));
  }
  return out;
}

double apply_fallback(const ParseResult& result, double fallback) {
  if (!(fallback >= kScoreMin && fallback <= kScoreMax)) {
    throw DataError("fallback score must lie in [1,5]");
  }
  return result.parsed() ? *result.score : fallback;
}

double failure_rate(std::span<const PredictionRecord> records) {
  if (records.empty()) throw DataError("failure_rate of an empty record list");
  const auto malformed = std::count_if(records.begin(), records.end(), [](const auto& r) {
    return r.parse_status == ParseStatus::Malformed;
  });
  return static_cast<double>(malformed) / static_cast<double>(records.size());
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * fraction);
  return buf;
}

std::string prediction_to_json_line(const PredictionRecord& r) {
  const nlohmann::ordered_json j = {
      {"dialogue_id", r.dialogue_id},
      {"turn_index", r.turn_index},
      {"quality", quality_id(r.quality)},
      {"score", r.score},
      {"parse_status", parse_status_name(r.parse_status)},
      {"source_split", r.source_split},
  };
  return j.dump();
}

PredictionRecord prediction_from_json_line(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    PredictionRecord r;
    r.dialogue_id = j.at("dialogue_id").get<std::string>();
    r.turn_index = j.at("turn_index").get<std::size_t>();
    const auto q = parse_quality(j.at("quality").get<std::string>());
    if (!q) throw DataError("unknown quality");
    r.quality = *q;
    r.score = j.at("score").get<double>();
    const auto status = j.at("parse_status").get<std::string>();
    if (status == "parsed") {
      r.parse_status = ParseStatus::Parsed;
    } else if (status == "malformed") {
      r.parse_status = ParseStatus::Malformed;
    } else {
      throw DataError("unknown parse_status `" + status + "`");
    }
    r.source_split = j.at("source_split").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed prediction record: ") + e.what());
  }
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(prediction_from_json_line(line));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace turneval
