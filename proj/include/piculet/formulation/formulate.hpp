#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "piculet/error.hpp"
#include "piculet/extractors/types.hpp"
#include "piculet/formulation/templates.hpp"

namespace piculet {

enum class PartTag { ocr, face, detection, predefined, user };

inline const char* to_string(PartTag t) {
  switch (t) {
    case PartTag::ocr: return "ocr";
    case PartTag::face: return "face";
    case PartTag::detection: return "detection";
    case PartTag::predefined: return "predefined";
    case PartTag::user: return "user";
  }
  return "?";
}

struct PromptPart {
  PartTag tag;
  std::string text;
  friend bool operator==(const PromptPart&, const PromptPart&) = default;
};

struct KnowledgePreamble {
  std::optional<std::string> ocr_sentence;
  std::optional<std::string> face_sentence;
  std::optional<std::string> detection_sentence;
};

// Final MLLM prompt. Invariant: joining `parts` with the template's final_joiner
// gives `text` byte for byte.
struct FormulatedQuery {
  std::string text;
  std::vector<PromptPart> parts;
  friend bool operator==(const FormulatedQuery&, const FormulatedQuery&) = default;
};

inline void to_json(nlohmann::json& j, const FormulatedQuery& q) {
  auto parts = nlohmann::json::array();
  for (const auto& p : q.parts) parts.push_back({{"tag", to_string(p.tag)}, {"text", p.text}});
  j = {{"text", q.text}, {"parts", parts}};
}

inline std::string pluralize(std::string_view noun, std::size_t count,
                             const std::map<std::string, std::string>& irregular = {}) {
  if (count == 1) return std::string(noun);
  if (auto it = irregular.find(std::string(noun)); it != irregular.end()) return it->second;
  return std::string(noun) + "s";
}

inline std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out.append(sep);
    out.append(items[i]);
  }
  return out;
}

// Groups by label, most frequent first, ties by label.
inline std::optional<std::string> format_detections(const std::vector<Detection>& detections,
                                                    const PromptTemplateSet& t = {}) {
  if (detections.empty()) return std::nullopt;
  std::map<std::string, std::size_t> counts;
  for (const auto& d : detections) ++counts[d.label];
  std::vector<std::pair<std::string, std::size_t>> groups(counts.begin(), counts.end());
  std::stable_sort(groups.begin(), groups.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> rendered;
  for (const auto& [label, n] : groups) {
    const auto& group_tmpl = n == 1 ? t.detection_group_singular : t.detection_group_plural;
    rendered.push_back(fill_slot(fill_slot(group_tmpl, kNumberSlot, std::to_string(n)), kObjectSlot,
                            pluralize(label, n, t.irregular_plurals)));
  }
  return fill_slot(t.detection_frame, kObjectsSlot, join(rendered, t.list_separator));
}

inline std::optional<std::string> format_ocr(const std::vector<OcrSpan>& spans,
                                             const PromptTemplateSet& t = {}) {
  if (spans.empty()) return std::nullopt;
  std::vector<std::string> texts;
  for (const auto& s : spans) texts.push_back(s.text);
  return fill_slot(t.ocr_frame, kCharactersSlot, join(texts, t.list_separator));
}

// One name per match, first occurrence wins on duplicates.
inline std::optional<std::string> format_faces(const std::vector<FaceMatch>& matches,
                                               const PromptTemplateSet& t = {}) {
  std::vector<std::string> names;
  for (const auto& m : matches)
    if (std::find(names.begin(), names.end(), m.name) == names.end()) names.push_back(m.name);
  if (names.empty()) return std::nullopt;
  const auto& frame = names.size() == 1 ? t.face_frame_singular : t.face_frame_plural;
  return fill_slot(frame, kCelebritiesSlot, join(names, t.list_separator));
}

inline KnowledgePreamble render_preamble(const ExtractionBundle& bundle, const PromptTemplateSet& t) {
  KnowledgePreamble p;
  if (bundle.ocr) p.ocr_sentence = format_ocr(*bundle.ocr, t);
  if (bundle.faces) p.face_sentence = format_faces(*bundle.faces, t);
  if (bundle.detections) p.detection_sentence = format_detections(*bundle.detections, t);
  return p;
}

// Order: ocr, face, detection, predefined, user; absent sentences are skipped.
inline FormulatedQuery assemble_prompt(const ExtractionBundle& bundle, const PromptTemplateSet& t,
                                       std::string_view user_query) {
  if (user_query.empty()) throw input_error("user query must not be empty");
  const auto pre = render_preamble(bundle, t);
  FormulatedQuery q;
  if (pre.ocr_sentence) q.parts.push_back({PartTag::ocr, *pre.ocr_sentence});
  if (pre.face_sentence) q.parts.push_back({PartTag::face, *pre.face_sentence});
  if (pre.detection_sentence) q.parts.push_back({PartTag::detection, *pre.detection_sentence});
  q.parts.push_back({PartTag::predefined, t.predefined_prompt});
  q.parts.push_back({PartTag::user, std::string(user_query)});
  for (std::size_t i = 0; i < q.parts.size(); ++i) {
    if (i) q.text += t.final_joiner;
    q.text += q.parts[i].text;
  }
  return q;
}

// `--show-prompt` rendering: one "[tag] text" line per part.
inline std::string render_tagged(const FormulatedQuery& q) {
  std::string out;
  for (const auto& p : q.parts) {
    out += "[";
    out += to_string(p.tag);
    out += "] ";
    out += p.text;
    out += "\n";
  }
  return out;
}

}  // namespace piculet
