#pragma once

#include <array>
#include <cctype>
#include <cstdlib>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "piculet/error.hpp"
#include "piculet/formulation/templates.hpp"
#include "piculet/gateway/mllm.hpp"

namespace piculet {

inline constexpr std::string_view kResponse1Slot = "{Response 1}";
inline constexpr std::string_view kResponse2Slot = "{Response 2}";
inline constexpr std::string_view kQuestionSlot = "{question}";

// Pairwise judge prompt: the judge sees the image and both answers and scores each
// for accuracy and detailedness out of 10. Response 1 is the plain answer,
// Response 2 the knowledge-augmented one.
inline constexpr std::string_view kDefaultJudgeTemplate =
    "You are given an image, a question about it, and two responses to that question.\n"
    "Question: {question}\n"
    "[Response 1]\n{Response 1}\n[End of Response 1]\n"
    "[Response 2]\n{Response 2}\n[End of Response 2]\n"
    "Check each response against the image. Score accuracy (is everything stated actually in the "
    "image, with no hallucinated objects, counts, attributes or text) and detailedness (how "
    "specific and complete the response is), each on a scale of 0 to 10.\n"
    "Reply in exactly this format:\n"
    "Response 1: accuracy <score>, detailedness <score>\n"
    "Response 2: accuracy <score>, detailedness <score>";

struct JudgeScores {
  double accuracy_1 = 0;
  double detailedness_1 = 0;
  double accuracy_2 = 0;
  double detailedness_2 = 0;
  std::string raw;

  friend bool operator==(const JudgeScores&, const JudgeScores&) = default;
};

inline void to_json(nlohmann::json& j, const JudgeScores& s) {
  j = {{"accuracy_1", s.accuracy_1}, {"detailedness_1", s.detailedness_1},
       {"accuracy_2", s.accuracy_2}, {"detailedness_2", s.detailedness_2}, {"raw", s.raw}};
}

namespace judge_detail {

struct Token {
  enum Kind { word, number, punct } kind;
  std::string text;
  double value = 0;
  std::size_t line = 0;
};

inline std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t line = 0;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c == '\n') ++line;
    if (std::isalpha(c)) {
      std::size_t j = i;
      std::string w;
      while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j])))
        w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[j++]))));
      out.push_back({Token::word, w, 0, line});
      i = j;
    } else if (std::isdigit(c) ||
               (c == '-' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])) &&
                (i == 0 || !std::isalnum(static_cast<unsigned char>(s[i - 1]))))) {
      std::size_t j = i + 1;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      if (j + 1 < s.size() && s[j] == '.' && std::isdigit(static_cast<unsigned char>(s[j + 1]))) {
        ++j;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
      }
      std::string num(s.substr(i, j - i));
      out.push_back({Token::number, num, std::strtod(num.c_str(), nullptr), line});
      i = j;
    } else {
      if (!std::isspace(c)) out.push_back({Token::punct, std::string(1, static_cast<char>(c)), 0, line});
      ++i;
    }
  }
  return out;
}

inline int metric_of(const Token& t) {
  if (t.kind != Token::word) return -1;
  if (t.text == "accuracy" || t.text == "accurate") return 0;
  if (t.text == "detailedness" || t.text == "detail" || t.text == "details") return 1;
  return -1;
}

inline bool is_scope_word(const Token& t) {
  return t.kind == Token::word && (t.text == "response" || t.text == "assistant");
}

inline bool is_index(const Token& t) {
  return t.kind == Token::number && (t.text == "1" || t.text == "2");
}

inline Error judge_error(ErrorKind kind, const std::string& msg, std::string_view raw) {
  Error e(kind, msg);
  e.set_raw(std::string(raw));
  e.set_backend_name("judge");
  return e;
}

}  // namespace judge_detail

// Scans "Response N" scopes and accuracy/detailedness labels followed by a number
// ("7", "7.5", "7/10"); labels may also carry the index ("accuracy_1: 7").
// Fallback when nothing is labeled: a first line holding exactly four numbers,
// read as accuracy_1 detailedness_1 accuracy_2 detailedness_2.
// Scores outside [0,10] are a range error, never clamped.
inline JudgeScores parse_judge_output(std::string_view text) {
  using namespace judge_detail;
  const auto toks = tokenize(text);
  std::array<std::array<std::optional<double>, 2>, 2> slot{};
  bool any_labeled = false;
  bool any_number = false;
  int scope = -1;

  auto check_range = [&](double v) {
    if (!(v >= 0.0 && v <= 10.0))
      throw judge_error(ErrorKind::range, "judge score " + std::to_string(v) + " outside [0,10]", text);
  };
  auto assign = [&](int resp, int metric, double v) {
    check_range(v);
    auto& cell = slot[static_cast<std::size_t>(resp)][static_cast<std::size_t>(metric)];
    if (cell && *cell != v)
      throw judge_error(ErrorKind::judge_parse, "conflicting judge scores for the same response", text);
    cell = v;
    any_labeled = true;
  };

  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    any_number = any_number || t.kind == Token::number;
    if (is_scope_word(t)) {
      std::size_t j = i + 1;
      while (j < toks.size() && toks[j].kind == Token::punct && toks[j].text != ":" && j < i + 3) ++j;
      if (j < toks.size() && is_index(toks[j])) {
        scope = toks[j].text == "1" ? 0 : 1;
        i = j;
      }
      continue;
    }
    const int metric = metric_of(t);
    if (metric < 0) continue;

    // Indexed form: accuracy_1: 7 / accuracy 2 = 6
    std::size_t j = i + 1;
    if (j < toks.size() && toks[j].kind == Token::punct && toks[j].text == "_") ++j;
    if (j + 2 < toks.size() && is_index(toks[j]) && toks[j + 1].kind == Token::punct &&
        (toks[j + 1].text == ":" || toks[j + 1].text == "=") && toks[j + 2].kind == Token::number) {
      assign(toks[j].text == "1" ? 0 : 1, metric, toks[j + 2].value);
      any_number = true;
      i = j + 2;
      continue;
    }

    // Labeled form: next number within a short window, stopping at another label.
    for (j = i + 1; j < toks.size() && j <= i + 4; ++j) {
      if (metric_of(toks[j]) >= 0 || is_scope_word(toks[j])) break;
      if (toks[j].kind != Token::number) continue;
      any_number = true;
      const double v = toks[j].value;
      if (scope < 0) {
        check_range(v);
      } else {
        assign(scope, metric, v);
      }
      // Skip a "/10" denominator.
      if (j + 2 < toks.size() && toks[j + 1].text == "/" && toks[j + 2].kind == Token::number) j += 2;
      i = j;
      break;
    }
  }

  if (!any_labeled) {
    std::vector<double> first_line;
    std::size_t line = toks.empty() ? 0 : toks.front().line;
    for (const auto& t : toks) {
      if (t.line != line) break;
      if (t.kind == Token::number) first_line.push_back(t.value);
    }
    if (first_line.size() == 4) {
      for (double v : first_line) check_range(v);
      return {first_line[0], first_line[1], first_line[2], first_line[3], std::string(text)};
    }
    throw judge_error(ErrorKind::judge_parse,
                      any_number ? "judge output has no labeled accuracy/detailedness scores"
                                 : "judge output contains no scores",
                      text);
  }

  static constexpr const char* names[2][2] = {{"accuracy_1", "detailedness_1"},
                                              {"accuracy_2", "detailedness_2"}};
  std::string missing;
  for (int r = 0; r < 2; ++r)
    for (int m = 0; m < 2; ++m)
      if (!slot[r][m]) missing += (missing.empty() ? "" : ", ") + std::string(names[r][m]);
  if (!missing.empty()) throw judge_error(ErrorKind::judge_parse, "judge output lacks " + missing, text);
  return {*slot[0][0], *slot[0][1], *slot[1][0], *slot[1][1], std::string(text)};
}

inline std::string render_judge_prompt(std::string_view tmpl, std::string_view question,
                                       std::string_view response_1, std::string_view response_2) {
  if (count_occurrences(tmpl, kResponse1Slot) == 0 || count_occurrences(tmpl, kResponse2Slot) == 0)
    throw input_error("judge template must contain {Response 1} and {Response 2}");
  // Question first so braces inside the responses are never re-expanded.
  auto out = fill_slot(tmpl, kQuestionSlot, "\x01Q\x01");
  out = fill_slot(out, kResponse1Slot, "\x01R1\x01");
  out = fill_slot(out, kResponse2Slot, "\x01R2\x01");
  out = fill_slot(out, "\x01Q\x01", question);
  out = fill_slot(out, "\x01R1\x01", response_1);
  out = fill_slot(out, "\x01R2\x01", response_2);
  return out;
}

// One vision-chat call comparing both responses with the image attached.
inline JudgeScores judge_responses(std::span<const std::uint8_t> image, std::string_view question,
                                   std::string_view response_1, std::string_view response_2,
                                   MllmBackend& judge, const MllmBackendConfig& config,
                                   std::string_view tmpl = kDefaultJudgeTemplate) {
  const auto prompt = render_judge_prompt(tmpl, question, response_1, response_2);
  auto answer = query_mllm(image, prompt, judge, config);
  return parse_judge_output(answer.text);
}

}  // namespace piculet
