#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "turneval/quality.hpp"

namespace turneval {

enum class Speaker { User, System };

std::string_view speaker_tag(Speaker s);

struct DialogueTurn {
  Speaker speaker = Speaker::User;
  std::string text;
  /// Source-dataset annotations, verbatim.
  std::map<std::string, double> annotations;
  /// Target qualities on the [1,5] scale; filled by map_annotations.
  QualityScores scores;
};

struct Dialogue {
  std::string id;
  std::string source_split;
  std::vector<DialogueTurn> turns;
};

using Corpus = std::vector<Dialogue>;

struct ScoreRange {
  double low = kScoreMin;
  double high = kScoreMax;
};

inline constexpr ScoreRange kTargetRange{kScoreMin, kScoreMax};

struct MappingTerm {
  std::string name;
  double weight = 1.0;
};

/// Linear combination of source annotations for one target quality.
/// `source_range` is the range of the combined raw value.
struct QualityMapping {
  std::vector<MappingTerm> terms;
  ScoreRange source_range;
};

/// Per source split, per target quality.
struct MappingSpec {
  std::map<std::string, std::map<Quality, QualityMapping>> splits;
};

struct MappingWarning {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  Quality quality = Quality::Appropriateness;
  std::string missing_annotation;
};

struct MappedCorpus {
  Corpus dialogues;
  std::vector<MappingWarning> warnings;
};

/// Reads a line-delimited dialogue file. Each record may also carry a
/// per-turn "scores" object (written by save_corpus).
Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(std::istream& in, const std::string& source_name = "<stream>");
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

MappingSpec load_mapping_spec(const std::filesystem::path& path);
MappingSpec parse_mapping_spec(std::string_view json_text);

MappedCorpus map_annotations(const Corpus& corpus, const MappingSpec& spec);

/// Affine map from `source` onto `target`, clamped into `target`.
double rescale_scores(double value, ScoreRange source, ScoreRange target = kTargetRange);

struct TrainValSplit {
  Corpus train;
  Corpus val;
};

/// Shuffles dialogues with `seed` and holds out round-half-even(fraction * N).
TrainValSplit split_train_val(const Corpus& corpus, double val_fraction,
                              std::uint64_t seed);

/// Up to `max_turns` turns immediately preceding `turn_index`.
std::vector<DialogueTurn> context_window(const Dialogue& dialogue,
                                         std::size_t turn_index,
                                         std::size_t max_turns);

}  // namespace turneval
