#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace turneval {

enum class Quality : std::uint8_t {
  Appropriateness = 0,
  ContentRichness = 1,
  GrammaticalCorrectness = 2,
  Relevance = 3,
};

inline constexpr std::array<Quality, 4> kAllQualities = {
    Quality::Appropriateness, Quality::ContentRichness,
    Quality::GrammaticalCorrectness, Quality::Relevance};

/// Identifier form used in files ("ContentRichness").
std::string_view quality_id(Quality q);
/// Human-readable label used in prompts ("Content Richness").
std::string_view quality_label(Quality q);
/// Accepts either form, case-insensitive, ignoring spaces/underscores/dashes.
std::optional<Quality> parse_quality(std::string_view name);
Quality quality_from_tag(std::uint8_t tag);

/// Partial map of quality scores on the common [1,5] scale.
using QualityScores = std::map<Quality, double>;

inline constexpr double kScoreMin = 1.0;
inline constexpr double kScoreMax = 5.0;

}  // namespace turneval
