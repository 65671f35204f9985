#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "test_util.hpp"
#include "turneval/data.hpp"
#include "turneval/errors.hpp"

using namespace turneval;

namespace {

std::string record(const std::string& id, int turns, const std::string& split = "dev") {
  std::string out = R"({"id":")" + id + R"(","source_split":")" + split + R"(","turns":[)";
  for (int t = 0; t < turns; ++t) {
    if (t) out += ",";
    out += R"({"speaker":")" + std::string(t % 2 ? "system" : "user") + R"(","text":"turn )" +
           std::to_string(t) + R"(","annotations":{"a":)" + std::to_string(0.5 * t) + "}}";
  }
  return out + "]}";
}

Corpus numbered(int n) {
  Corpus c;
  for (int i = 0; i < n; ++i) c.push_back({"d" + std::to_string(i), "dev", {{Speaker::User, "x", {}, {}}}});
  return c;
}

}  // namespace

TEST(Corpus, LoadsRecordsAndTurns) {
  std::istringstream in(record("a", 4) + "\n" + record("b", 4) + "\n");
  const auto corpus = parse_corpus(in);
  ASSERT_EQ(corpus.size(), 2u);
  EXPECT_EQ(corpus[0].turns.size(), 4u);
  EXPECT_EQ(corpus[1].turns.size(), 4u);
  EXPECT_EQ(corpus[1].turns[1].speaker, Speaker::System);
  EXPECT_DOUBLE_EQ(corpus[0].turns[3].annotations.at("a"), 1.5);
}

TEST(Corpus, EmptyFileGivesEmptyCorpus) {
  std::istringstream in("");
  EXPECT_TRUE(parse_corpus(in).empty());
}

TEST(Corpus, MissingTextNamesTheLine) {
  std::istringstream in(record("a", 2) + "\n" +
                        R"({"id":"b","source_split":"dev","turns":[{"speaker":"user"}]})" + "\n");
  try {
    parse_corpus(in, "fixture.jsonl");
    FAIL() << "expected a malformed-record error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("fixture.jsonl:2"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("malformed record"), std::string::npos);
  }
}

TEST(Corpus, DuplicateIdsRejected) {
  std::istringstream in(record("a", 1) + "\n" + record("a", 1) + "\n");
  EXPECT_THROW(parse_corpus(in), DataError);
}

TEST(Corpus, SaveLoadRoundTripKeepsScores) {
  test::TempDir dir("corpus");
  Corpus c = numbered(2);
  c[0].turns[0].scores[Quality::Relevance] = 4.25;
  c[1].turns[0].annotations["x"] = 1.5;
  save_corpus(c, dir / "c.jsonl");
  const auto back = load_corpus(dir / "c.jsonl");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_DOUBLE_EQ(back[0].turns[0].scores.at(Quality::Relevance), 4.25);
  EXPECT_DOUBLE_EQ(back[1].turns[0].annotations.at("x"), 1.5);
}

TEST(Rescale, EndpointsAndMidpoints) {
  const ScoreRange fed{0.0, 2.2};
  EXPECT_EQ(rescale_scores(0.0, fed), 1.0);
  EXPECT_EQ(rescale_scores(2.2, fed), 5.0);
  EXPECT_EQ(rescale_scores(1.1, fed), 3.0);
  EXPECT_DOUBLE_EQ(rescale_scores(0.55, fed), 2.0);
  EXPECT_EQ(rescale_scores(3.0, {1.0, 5.0}), 3.0);
}

TEST(Rescale, ClampsOutsideSource) {
  EXPECT_EQ(rescale_scores(-1.0, {0.0, 2.2}), 1.0);
  EXPECT_EQ(rescale_scores(9.0, {0.0, 2.2}), 5.0);
}

TEST(Rescale, DegenerateRangeThrows) {
  EXPECT_THROW(rescale_scores(1.0, {2.0, 2.0}), DataError);
}

TEST(Mapping, IdentityAndFedTurnRange) {
  const auto spec = parse_mapping_spec(R"({
    "dev": {"Appropriateness": {"terms": [{"name": "a", "weight": 1.0}], "source_range": [1, 5]}},
    "fed": {"Relevance": {"terms": [{"name": "r", "weight": 1.0}], "source_range": [0, 2.2]}}
  })");
  Corpus c = {{"x", "dev", {{Speaker::User, "t", {{"a", 3.5}}, {}}}},
              {"y", "fed", {{Speaker::User, "t", {{"r", 0.0}}, {}}, {Speaker::System, "u", {{"r", 1.1}}, {}}}}};
  const auto mapped = map_annotations(c, spec);
  EXPECT_TRUE(mapped.warnings.empty());
  EXPECT_EQ(mapped.dialogues[0].turns[0].scores.at(Quality::Appropriateness), 3.5);
  EXPECT_EQ(mapped.dialogues[1].turns[0].scores.at(Quality::Relevance), 1.0);
  EXPECT_EQ(mapped.dialogues[1].turns[1].scores.at(Quality::Relevance), 3.0);
}

TEST(Mapping, MissingTermWarnsAndLeavesScoreUnset) {
  const auto spec = parse_mapping_spec(R"({
    "dev": {"Appropriateness": {"terms": [{"name": "a", "weight": 0.5}, {"name": "b", "weight": 0.5}],
                                "source_range": [1, 5]}}
  })");
  Corpus c = {{"x", "dev", {{Speaker::User, "t", {{"a", 3.0}}, {}}}}};
  const auto mapped = map_annotations(c, spec);
  EXPECT_TRUE(mapped.dialogues[0].turns[0].scores.empty());
  ASSERT_EQ(mapped.warnings.size(), 1u);
  EXPECT_EQ(mapped.warnings[0].missing_annotation, "b");
}

TEST(Mapping, ScoresAlwaysInTargetRange) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  const auto spec = parse_mapping_spec(R"({
    "s": {"Appropriateness": {"terms": [{"name": "a", "weight": 2.0}, {"name": "b", "weight": -1.0}],
                              "source_range": [-3, 4]},
          "Relevance": {"terms": [{"name": "b", "weight": 1.0}], "source_range": [0, 2.2]}}
  })");
  Corpus c;
  for (int i = 0; i < 50; ++i) {
    Dialogue d{"d" + std::to_string(i), "s", {}};
    for (int t = 0; t < 5; ++t) d.turns.push_back({Speaker::User, "t", {{"a", u(rng)}, {"b", u(rng)}}, {}});
    c.push_back(d);
  }
  for (const auto& d : map_annotations(c, spec).dialogues) {
    for (const auto& t : d.turns) {
      for (const auto& [q, v] : t.scores) {
        EXPECT_GE(v, kScoreMin);
        EXPECT_LE(v, kScoreMax);
      }
    }
  }
}

TEST(Mapping, RejectsUnknownQuality) {
  EXPECT_THROW(parse_mapping_spec(R"({"s": {"Fluency": {"terms": [{"name": "a", "weight": 1}],
                                                       "source_range": [0, 1]}}})"),
               DataError);
}

TEST(Split, CardinalityAndDisjointness) {
  const auto split = split_train_val(numbered(10), 0.2, 7);
  EXPECT_EQ(split.train.size(), 8u);
  EXPECT_EQ(split.val.size(), 2u);
  std::set<std::string> ids;
  for (const auto& d : split.train) ids.insert(d.id);
  for (const auto& d : split.val) EXPECT_FALSE(ids.contains(d.id));
}

TEST(Split, Deterministic) {
  const auto a = split_train_val(numbered(25), 0.3, 42);
  const auto b = split_train_val(numbered(25), 0.3, 42);
  ASSERT_EQ(a.val.size(), b.val.size());
  for (std::size_t i = 0; i < a.val.size(); ++i) EXPECT_EQ(a.val[i].id, b.val[i].id);
}

TEST(Split, HalfRoundsToEmptyValidation) {
  EXPECT_THROW(split_train_val(numbered(10), 0.05, 1), DataError);
  EXPECT_THROW(split_train_val(numbered(10), 1.0, 1), DataError);
}

TEST(ContextWindow, Slices) {
  Dialogue d{"d", "dev", {}};
  for (int i = 0; i < 4; ++i) d.turns.push_back({Speaker::User, "t" + std::to_string(i), {}, {}});
  EXPECT_TRUE(context_window(d, 0, 8).empty());
  const auto w = context_window(d, 3, 2);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0].text, "t1");
  EXPECT_EQ(w[1].text, "t2");
  EXPECT_EQ(context_window(d, 3, 8).size(), 3u);
}
