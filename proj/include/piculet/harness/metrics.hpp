#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "piculet/error.hpp"

namespace piculet {

enum class BinaryAnswer { yes, no, other };

inline const char* to_string(BinaryAnswer a) {
  switch (a) {
    case BinaryAnswer::yes: return "Yes";
    case BinaryAnswer::no: return "No";
    case BinaryAnswer::other: return "Other";
  }
  return "Other";
}

inline BinaryAnswer parse_binary_answer(std::string_view s) {
  if (s == "Yes") return BinaryAnswer::yes;
  if (s == "No") return BinaryAnswer::no;
  if (s == "Other") return BinaryAnswer::other;
  throw parse_error("unknown normalized answer '" + std::string(s) + "'");
}

// Lower-cased alphabetic tokens of `text`.
inline std::vector<std::string> alpha_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalpha(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// First alphabetic token decides; otherwise a lone "yes" or lone "no" anywhere decides.
inline BinaryAnswer normalize_binary(std::string_view answer) {
  const auto tokens = alpha_tokens(answer);
  if (tokens.empty()) return BinaryAnswer::other;
  if (tokens.front() == "yes") return BinaryAnswer::yes;
  if (tokens.front() == "no") return BinaryAnswer::no;
  bool saw_yes = false, saw_no = false;
  for (const auto& t : tokens) {
    saw_yes = saw_yes || t == "yes";
    saw_no = saw_no || t == "no";
  }
  if (saw_yes != saw_no) return saw_yes ? BinaryAnswer::yes : BinaryAnswer::no;
  return BinaryAnswer::other;
}

// Binary QA tally; Other answers are kept apart and count as wrong.
struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t other_pos = 0;  // Other answer, label yes
  std::uint64_t other_neg = 0;  // Other answer, label no

  std::uint64_t total() const { return tp + fp + fn + tn + other_pos + other_neg; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline void to_json(nlohmann::json& j, const ConfusionCounts& c) {
  j = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn},
       {"other_pos", c.other_pos}, {"other_neg", c.other_neg}};
}

inline void add(ConfusionCounts& c, BinaryAnswer answer, bool label_yes) {
  switch (answer) {
    case BinaryAnswer::yes: ++(label_yes ? c.tp : c.fp); break;
    case BinaryAnswer::no: ++(label_yes ? c.fn : c.tn); break;
    case BinaryAnswer::other: ++(label_yes ? c.other_pos : c.other_neg); break;
  }
}

// labels[i] == true means the ground truth is "yes".
inline ConfusionCounts tally(const std::vector<BinaryAnswer>& answers, const std::vector<bool>& labels) {
  if (answers.size() != labels.size())
    throw input_error("tally: " + std::to_string(answers.size()) + " answers vs " +
                      std::to_string(labels.size()) + " labels");
  ConfusionCounts c;
  for (std::size_t i = 0; i < answers.size(); ++i) add(c, answers[i], labels[i]);
  return c;
}

struct PopeMetrics {
  double accuracy = 0;
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double yes_rate = 0;
  double no_rate = 0;
  double other_rate = 0;
  bool precision_undefined = false;  // tp + fp == 0
  bool recall_undefined = false;     // tp + fn == 0
  std::uint64_t n = 0;
};

inline void to_json(nlohmann::json& j, const PopeMetrics& m) {
  j = {{"accuracy", m.accuracy},   {"precision", m.precision},
       {"recall", m.recall},       {"f1", m.f1},
       {"yes_rate", m.yes_rate},   {"no_rate", m.no_rate},
       {"other_rate", m.other_rate}, {"precision_undefined", m.precision_undefined},
       {"recall_undefined", m.recall_undefined}, {"n", m.n}};
}

// N includes Other answers; undefined ratios are reported as 0 with a flag.
inline PopeMetrics pope_metrics(const ConfusionCounts& c) {
  PopeMetrics m;
  m.n = c.total();
  const auto ratio = [](std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = ratio(c.tp + c.tn, m.n);
  m.precision_undefined = c.tp + c.fp == 0;
  m.recall_undefined = c.tp + c.fn == 0;
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.yes_rate = ratio(c.tp + c.fp, m.n);
  m.no_rate = ratio(c.fn + c.tn, m.n);
  m.other_rate = ratio(c.other_pos + c.other_neg, m.n);
  return m;
}

struct MmeAnswer {
  BinaryAnswer answer = BinaryAnswer::other;
  bool label_yes = false;

  bool correct() const {
    return (answer == BinaryAnswer::yes && label_yes) || (answer == BinaryAnswer::no && !label_yes);
  }
};

using MmePair = std::pair<MmeAnswer, MmeAnswer>;

// Percentages: accuracy over answers, accuracy_plus over pairs with both answers right.
struct MmeSubtaskScore {
  double accuracy = 0;
  double accuracy_plus = 0;
  double score = 0;
  std::uint64_t pairs = 0;
  std::uint64_t correct_answers = 0;
  std::uint64_t correct_pairs = 0;
};

inline void to_json(nlohmann::json& j, const MmeSubtaskScore& s) {
  j = {{"accuracy", s.accuracy}, {"accuracy_plus", s.accuracy_plus}, {"score", s.score},
       {"pairs", s.pairs}, {"correct_answers", s.correct_answers}, {"correct_pairs", s.correct_pairs}};
}

inline MmeSubtaskScore mme_score(const std::vector<MmePair>& pairs) {
  MmeSubtaskScore s;
  s.pairs = pairs.size();
  for (const auto& [a, b] : pairs) {
    s.correct_answers += static_cast<std::uint64_t>(a.correct()) + static_cast<std::uint64_t>(b.correct());
    s.correct_pairs += static_cast<std::uint64_t>(a.correct() && b.correct());
  }
  if (s.pairs == 0) return s;
  s.accuracy = 100.0 * static_cast<double>(s.correct_answers) / static_cast<double>(2 * s.pairs);
  s.accuracy_plus = 100.0 * static_cast<double>(s.correct_pairs) / static_cast<double>(s.pairs);
  s.score = s.accuracy + s.accuracy_plus;
  return s;
}

}  // namespace piculet
