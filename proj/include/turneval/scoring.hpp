#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "turneval/data.hpp"
#include "turneval/quality.hpp"

namespace turneval {

enum class ParseStatus { Parsed, Malformed };

std::string_view parse_status_name(ParseStatus s);

struct ParseResult {
  ParseStatus status = ParseStatus::Malformed;
  std::optional<double> score;  // present iff parsed
  std::string raw_text;

  bool parsed() const { return status == ParseStatus::Parsed; }
};

/// First decimal number in `text`. Values within half a range-width of
/// `range` are clamped into it; anything further out, or no number at all,
/// is malformed. Never throws for any input text.
ParseResult parse_score(std::string_view text, ScoreRange range = kTargetRange);

/// Finds the line labelled with each quality's name and parses the number
/// after the label. Missing or unparsable lines are malformed individually.
std::map<Quality, ParseResult> parse_all_qualities(std::string_view text,
                                                   ScoreRange range = kTargetRange);

inline constexpr double kDefaultFallback = 3.0;

double apply_fallback(const ParseResult& result, double fallback = kDefaultFallback);

struct PredictionRecord {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  Quality quality = Quality::Appropriateness;
  double score = kDefaultFallback;
  ParseStatus parse_status = ParseStatus::Parsed;
  std::string source_split;
};

/// Fraction of malformed records; throws on an empty list.
double failure_rate(std::span<const PredictionRecord> records);
/// Percentage with two decimals, e.g. "1.00%".
std::string format_percent(double fraction);

std::string prediction_to_json_line(const PredictionRecord& record);
PredictionRecord prediction_from_json_line(std::string_view line);
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path);

}  // namespace turneval
