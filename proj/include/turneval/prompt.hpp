#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "turneval/data.hpp"
#include "turneval/store.hpp"

namespace turneval {

enum class QualityMode { Single, AllFour };

/// A prompt body plus the format used for each few-shot example.
///
/// Body placeholders: {examples}, {dialogue_context}, {response}, and in
/// single mode {quality_name}; each exactly once. Lines `{?examples}` and
/// `{/examples}` delimit a section dropped when no examples are given.
/// Example placeholders: {context}, {response}, {score}.
struct PromptTemplate {
  std::string name;
  QualityMode mode = QualityMode::Single;
  std::string body;
  std::string example_format = "Context: {context}\nResponse: {response}\nScore: {score}";
};

/// File layout: a `#! name=<n> mode=single|all_four` header line, the body,
/// and optionally a `#! example` line followed by the example format.
PromptTemplate parse_template(std::string_view text);
PromptTemplate load_template(const std::filesystem::path& path);

/// Validates placeholder usage; throws DataError.
void validate_template(const PromptTemplate& tmpl);

/// "user: ..." / "system: ..." lines.
std::string format_context(std::span<const DialogueTurn> turns);
/// One decimal place ("4.0").
std::string format_score(double score);
/// Text a store entry is embedded under; probes use the same form.
std::string example_key_text(std::string_view context_text, std::string_view response_text);

/// `quality` selects the single-quality target; std::nullopt requests the
/// all-four form.
std::string render_prompt(const PromptTemplate& tmpl, std::optional<Quality> quality,
                          std::span<const DialogueTurn> context, std::string_view response,
                          std::span<const FewShotExample> examples);

/// Collapses 3+ newlines to 2, strips trailing whitespace on every line and
/// ends non-empty text with exactly one newline.
std::string normalize_newlines(std::string_view text);

struct NoExamples {};
struct FixedExamples {
  std::vector<FewShotExample> examples;
};
struct DynamicExamples {
  std::size_t k = 2;
};
using ExamplePolicy = std::variant<NoExamples, FixedExamples, DynamicExamples>;

/// Fixed examples file: one JSON object per line with
/// {"context": str, "response": str, "quality": str, "score": number}.
std::vector<FewShotExample> load_fixed_examples(const std::filesystem::path& path);

std::vector<FewShotExample> select_examples(const ExamplePolicy& policy, const VectorStore* store,
                                            Quality quality, const Embedding* probe);

/// All-four variant: dynamic retrieval ranks the Appropriateness partition
/// and returns every stored score of each hit, grouped per hit.
std::vector<FewShotExample> select_examples_all(const ExamplePolicy& policy,
                                                const VectorStore* store, const Embedding* probe);

}  // namespace turneval
