#include "turneval/prompt.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "turneval/errors.hpp"

namespace turneval {

namespace {

constexpr std::string_view kSectionOpen = "{?examples}";
constexpr std::string_view kSectionClose = "{/examples}";

struct Segment {
  bool placeholder = false;
  std::string text;  // literal text or placeholder name
};

bool is_name_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

/// Splits `text` into literals and `{name}` placeholders. Braces that do
/// not enclose a lower-case identifier stay literal.
std::vector<Segment> tokenize(std::string_view text) {
  std::vector<Segment> out;
  std::string literal;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t j = i + 1;
      while (j < text.size() && is_name_char(text[j])) ++j;
      if (j < text.size() && text[j] == '}' && j > i + 1) {
        if (!literal.empty()) out.push_back({false, std::move(literal)});
        literal.clear();
        out.push_back({true, std::string(text.substr(i + 1, j - i - 1))});
        i = j + 1;
        continue;
      }
    }
    literal.push_back(text[i++]);
  }
  if (!literal.empty()) out.push_back({false, std::move(literal)});
  return out;
}

std::map<std::string, int> count_placeholders(std::string_view text) {
  std::map<std::string, int> counts;
  for (const auto& s : tokenize(text)) {
    if (s.placeholder) ++counts[s.text];
  }
  return counts;
}

void require_exact(const std::map<std::string, int>& counts,
                   std::initializer_list<std::string_view> required, std::string_view where) {
  std::map<std::string, int> expected;
  for (auto r : required) expected[std::string(r)] = 1;
  for (const auto& [name, n] : counts) {
    if (!expected.contains(name)) {
      throw DataError(std::string(where) + ": unknown placeholder {" + name + "}");
    }
  }
  for (const auto& [name, n] : expected) {
    const auto it = counts.find(name);
    const int got = it == counts.end() ? 0 : it->second;
    if (got != 1) {
      throw DataError(std::string(where) + ": placeholder {" + name + "} must appear exactly once (found " +
                      std::to_string(got) + ")");
    }
  }
}

std::string substitute(std::string_view text, const std::map<std::string, std::string>& values) {
  std::string out;
  for (const auto& s : tokenize(text)) {
    if (!s.placeholder) {
      out += s.text;
      continue;
    }
    const auto it = values.find(s.text);
    if (it == values.end()) throw DataError("unresolved placeholder {" + s.text + "}");
    out += it->second;
  }
  return out;
}

std::string trim_right(std::string_view s) {
  auto end = s.find_last_not_of(" \t\r\f\v");
  return end == std::string_view::npos ? std::string() : std::string(s.substr(0, end + 1));
}

/// Removes the optional-examples section markers, dropping the enclosed
/// lines as well when `keep` is false.
std::string apply_examples_section(std::string_view body, bool keep) {
  std::istringstream in{std::string(body)};
  std::string line, out;
  bool inside = false;
  bool first = true;
  while (std::getline(in, line)) {
    const auto trimmed = trim_right(line);
    if (trimmed == kSectionOpen) {
      inside = true;
      continue;
    }
    if (trimmed == kSectionClose) {
      inside = false;
      continue;
    }
    if (inside && !keep) continue;
    if (!first) out.push_back('\n');
    out += line;
    first = false;
  }
  if (!body.empty() && body.back() == '\n') out.push_back('\n');
  return out;
}

std::string strip_section_markers(std::string_view body) {
  std::string out(body);
  for (auto marker : {kSectionOpen, kSectionClose}) {
    for (auto pos = out.find(marker); pos != std::string::npos; pos = out.find(marker)) {
      out.erase(pos, marker.size());
    }
  }
  return out;
}

std::string render_examples_single(const PromptTemplate& tmpl,
                                   std::span<const FewShotExample> examples) {
  std::string out;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i) out += "\n\n";
    out += substitute(tmpl.example_format, {{"context", examples[i].context_text},
                                            {"response", examples[i].response_text},
                                            {"score", format_score(examples[i].score)}});
  }
  return out;
}

std::string render_examples_all(const PromptTemplate& tmpl,
                                std::span<const FewShotExample> examples) {
  struct Group {
    const FewShotExample* first;
    std::map<Quality, double> scores;
  };
  std::vector<Group> groups;
  for (const auto& ex : examples) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) {
      return g.first->context_text == ex.context_text &&
             g.first->response_text == ex.response_text;
    });
    if (it == groups.end()) {
      groups.push_back({&ex, {}});
      it = std::prev(groups.end());
    }
    it->scores.emplace(ex.quality, ex.score);
  }
  std::string out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    std::string score_lines;
    for (const auto& [q, s] : groups[i].scores) {
      if (!score_lines.empty()) score_lines += '\n';
      score_lines += std::string(quality_label(q)) + " Score: " + format_score(s);
    }
    if (i) out += "\n\n";
    out += substitute(tmpl.example_format, {{"context", groups[i].first->context_text},
                                            {"response", groups[i].first->response_text},
                                            {"score", score_lines}});
  }
  return out;
}

}  // namespace

void validate_template(const PromptTemplate& tmpl) {
  const std::string where = "template `" + tmpl.name + "`";
  const auto body = strip_section_markers(tmpl.body);
  if (tmpl.mode == QualityMode::Single) {
    require_exact(count_placeholders(body),
                  {"examples", "dialogue_context", "response", "quality_name"}, where);
  } else {
    require_exact(count_placeholders(body), {"examples", "dialogue_context", "response"}, where);
  }
  require_exact(count_placeholders(tmpl.example_format), {"context", "response", "score"},
                where + " example format");
}

PromptTemplate parse_template(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line.rfind("#!", 0) != 0) {
    throw DataError("template must start with a `#! name=... mode=...` header line");
  }
  PromptTemplate tmpl;
  tmpl.name.clear();
  std::istringstream header(line.substr(2));
  std::string field;
  bool have_mode = false;
  while (header >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw DataError("bad template header field `" + field + "`");
    const auto key = field.substr(0, eq);
    const auto value = field.substr(eq + 1);
    if (key == "name") {
      tmpl.name = value;
    } else if (key == "mode") {
      if (value == "single") {
        tmpl.mode = QualityMode::Single;
      } else if (value == "all_four") {
        tmpl.mode = QualityMode::AllFour;
      } else {
        throw DataError("unknown template mode `" + value + "`");
      }
      have_mode = true;
    } else {
      throw DataError("unknown template header key `" + key + "`");
    }
  }
  if (tmpl.name.empty() || !have_mode) throw DataError("template header needs name= and mode=");

  std::string body, example;
  bool in_example = false;
  while (std::getline(in, line)) {
    if (trim_right(line) == "#! example") {
      in_example = true;
      continue;
    }
    auto& target = in_example ? example : body;
    target += line;
    target += '\n';
  }
  tmpl.body = std::move(body);
  if (in_example) {
    while (!example.empty() && example.back() == '\n') example.pop_back();
    tmpl.example_format = std::move(example);
  }
  validate_template(tmpl);
  return tmpl;
}

PromptTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open template " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_template(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string format_context(std::span<const DialogueTurn> turns) {
  std::string out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i) out.push_back('\n');
    out += speaker_tag(turns[i].speaker);
    out += ": ";
    out += turns[i].text;
  }
  return out;
}

std::string format_score(double score) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", score);
  return buf;
}

std::string example_key_text(std::string_view context_text, std::string_view response_text) {
  std::string out(context_text);
  if (!out.empty()) out.push_back('\n');
  out += response_text;
  return out;
}

std::string render_prompt(const PromptTemplate& tmpl, std::optional<Quality> quality,
                          std::span<const DialogueTurn> context, std::string_view response,
                          std::span<const FewShotExample> examples) {
  std::map<std::string, std::string> values{
      {"dialogue_context", format_context(context)},
      {"response", std::string(response)},
  };
  if (tmpl.mode == QualityMode::Single) {
    if (!quality) {
      throw DataError("template `" + tmpl.name + "` is single-quality but all qualities were requested");
    }
    values["quality_name"] = std::string(quality_label(*quality));
    values["examples"] = render_examples_single(tmpl, examples);
  } else {
    values["examples"] = render_examples_all(tmpl, examples);
  }
  const auto body = apply_examples_section(tmpl.body, !examples.empty());
  return normalize_newlines(substitute(body, values));
}

std::string normalize_newlines(std::string_view text) {
  std::string joined;
  std::size_t start = 0;
  for (;;) {
    const auto nl = text.find('\n', start);
    joined += trim_right(text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    if (nl == std::string_view::npos) break;
    joined.push_back('\n');
    start = nl + 1;
  }
  std::string out;
  out.reserve(joined.size());
  std::size_t run = 0;
  for (char c : joined) {
    if (c == '\n') {
      if (++run > 2) continue;
    } else {
      run = 0;
    }
    out.push_back(c);
  }
  while (!out.empty() && out.back() == '\n') out.pop_back();
  if (!out.empty()) out.push_back('\n');
  return out;
}

std::vector<FewShotExample> load_fixed_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fixed examples " + path.string());
  std::vector<FewShotExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_right(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      FewShotExample ex;
      ex.context_text = j.at("context").get<std::string>();
      ex.response_text = j.at("response").get<std::string>();
      const auto q = parse_quality(j.at("quality").get<std::string>());
      if (!q) throw DataError("unknown quality");
      ex.quality = *q;
      ex.score = j.at("score").get<double>();
      if (!(ex.score >= kScoreMin && ex.score <= kScoreMax)) throw DataError("score outside [1,5]");
      ex.source_split = j.value("source_split", std::string("fixed"));
      out.push_back(std::move(ex));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.empty()) throw DataError(path.string() + ": no fixed examples");
  return out;
}

std::vector<FewShotExample> select_examples(const ExamplePolicy& policy, const VectorStore* store,
                                            Quality quality, const Embedding* probe) {
  if (std::holds_alternative<NoExamples>(policy)) return {};
  if (const auto* fixed = std::get_if<FixedExamples>(&policy)) return fixed->examples;
  const auto& dynamic = std::get<DynamicExamples>(policy);
  if (store == nullptr || probe == nullptr) {
    throw DataError("dynamic example selection needs a vector store and a probe embedding");
  }
  return store->query(*probe, quality, dynamic.k);
}

std::vector<FewShotExample> select_examples_all(const ExamplePolicy& policy,
                                                const VectorStore* store, const Embedding* probe) {
  if (!std::holds_alternative<DynamicExamples>(policy)) {
    return select_examples(policy, store, Quality::Appropriateness, probe);
  }
  if (store == nullptr || probe == nullptr) {
    throw DataError("dynamic example selection needs a vector store and a probe embedding");
  }
  std::vector<FewShotExample> out;
  for (const auto& hit : store->nearest(*probe, Quality::Appropriateness,
                                        std::get<DynamicExamples>(policy).k)) {
    for (auto id : store->siblings(hit.id)) out.push_back(store->entry(id));
  }
  return out;
}

}  // namespace turneval
