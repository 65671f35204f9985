#include "turneval/quality.hpp"

#include <cctype>

#include "turneval/errors.hpp"

namespace turneval {

std::string_view quality_id(Quality q) {
  switch (q) {
    case Quality::Appropriateness: return "Appropriateness";
    case Quality::ContentRichness: return "ContentRichness";
    case Quality::GrammaticalCorrectness: return "GrammaticalCorrectness";
    case Quality::Relevance: return "Relevance";
  }
  return "?";
}

std::string_view quality_label(Quality q) {
  switch (q) {
    case Quality::Appropriateness: return "Appropriateness";
    case Quality::ContentRichness: return "Content Richness";
    case Quality::GrammaticalCorrectness: return "Grammatical Correctness";
    case Quality::Relevance: return "Relevance";
  }
  return "?";
}

namespace {

std::string squash(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == ' ' || c == '_' || c == '-') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

std::optional<Quality> parse_quality(std::string_view name) {
  const std::string key = squash(name);
  for (Quality q : kAllQualities) {
    if (squash(quality_id(q)) == key) return q;
  }
  return std::nullopt;
}

Quality quality_from_tag(std::uint8_t tag) {
  if (tag > 3) throw DataError("invalid quality tag " + std::to_string(tag));
  return static_cast<Quality>(tag);
}

}  // namespace turneval
