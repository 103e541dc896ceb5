#pragma once

#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "piculet/error.hpp"

namespace piculet {

// Placeholder tokens recognized by the renderers.
inline constexpr std::string_view kNumberSlot = "{number}";
inline constexpr std::string_view kObjectSlot = "{object}";
inline constexpr std::string_view kObjectsSlot = "{objects}";
inline constexpr std::string_view kCharactersSlot = "{recognized characters}";
inline constexpr std::string_view kCelebritiesSlot = "{recognized celebrities}";

inline std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size()))
    ++n;
  return n;
}

// Replaces every occurrence of `slot`.
inline std::string fill_slot(std::string_view tmpl, std::string_view slot, std::string_view value) {
  std::string out;
  std::size_t pos = 0;
  for (auto hit = tmpl.find(slot); hit != std::string_view::npos; hit = tmpl.find(slot, pos)) {
    out.append(tmpl.substr(pos, hit - pos));
    out.append(value);
    pos = hit + slot.size();
  }
  out.append(tmpl.substr(pos));
  return out;
}

inline std::map<std::string, std::string> default_irregular_plurals() {
  return {
      {"bench", "benches"},         {"bus", "buses"},       {"couch", "couches"},
      {"knife", "knives"},          {"mouse", "mice"},      {"sandwich", "sandwiches"},
      {"scissors", "scissors"},     {"sheep", "sheep"},     {"skis", "skis"},
      {"toothbrush", "toothbrushes"}, {"wine glass", "wine glasses"},
  };
}

// Sentence frames for the knowledge preamble. Defaults are the English frames
// "the image contains these objects: there is/are {number} {object}.",
// "The text content contained in the image: {recognized characters}." and
// "the celebrity/celebrities in the image is/are: {recognized celebrities}.".
struct PromptTemplateSet {
  std::string detection_frame = "the image contains these objects: {objects}.";
  std::string detection_group_singular = "there is {number} {object}";
  std::string detection_group_plural = "there are {number} {object}";
  std::string ocr_frame = "The text content contained in the image: {recognized characters}.";
  std::string face_frame_singular = "the celebrity in the image is: {recognized celebrities}.";
  std::string face_frame_plural = "the celebrities in the image are: {recognized celebrities}.";
  std::string predefined_prompt =
      "Answer the question based on the image and the factual information provided.";
  std::string list_separator = ", ";
  std::string final_joiner = "\n";
  std::map<std::string, std::string> irregular_plurals = default_irregular_plurals();

  void validate() const {
    auto exactly_once = [](const std::string& tmpl, std::string_view slot, const char* field) {
      if (count_occurrences(tmpl, slot) != 1)
        throw input_error(std::string("templates.") + field + " must contain " +
                          std::string(slot) + " exactly once");
    };
    exactly_once(detection_frame, kObjectsSlot, "detection_frame");
    exactly_once(detection_group_singular, kNumberSlot, "detection_group_singular");
    exactly_once(detection_group_singular, kObjectSlot, "detection_group_singular");
    exactly_once(detection_group_plural, kNumberSlot, "detection_group_plural");
    exactly_once(detection_group_plural, kObjectSlot, "detection_group_plural");
    exactly_once(ocr_frame, kCharactersSlot, "ocr_frame");
    exactly_once(face_frame_singular, kCelebritiesSlot, "face_frame_singular");
    exactly_once(face_frame_plural, kCelebritiesSlot, "face_frame_plural");
    if (predefined_prompt.empty()) throw input_error("templates.predefined_prompt must not be empty");
  }

  nlohmann::json to_json() const {
    return {{"detection_frame", detection_frame},
            {"detection_group_singular", detection_group_singular},
            {"detection_group_plural", detection_group_plural},
            {"ocr_frame", ocr_frame},
            {"face_frame_singular", face_frame_singular},
            {"face_frame_plural", face_frame_plural},
            {"predefined_prompt", predefined_prompt},
            {"list_separator", list_separator},
            {"final_joiner", final_joiner},
            {"irregular_plurals", irregular_plurals}};
  }

  // Missing keys keep their defaults; unknown keys are rejected.
  static PromptTemplateSet from_json(const nlohmann::json& j) {
    PromptTemplateSet t;
    if (j.is_null()) return t;
    if (!j.is_object()) throw input_error("templates section must be an object");
    for (const auto& [key, value] : j.items()) {
      auto str = [&](std::string& field) {
        if (!value.is_string()) throw input_error("templates." + key + " must be a string");
        field = value.get<std::string>();
      };
      if (key == "detection_frame") str(t.detection_frame);
      else if (key == "detection_group_singular") str(t.detection_group_singular);
      else if (key == "detection_group_plural") str(t.detection_group_plural);
      else if (key == "ocr_frame") str(t.ocr_frame);
      else if (key == "face_frame_singular") str(t.face_frame_singular);
      else if (key == "face_frame_plural") str(t.face_frame_plural);
      else if (key == "predefined_prompt") str(t.predefined_prompt);
      else if (key == "list_separator") str(t.list_separator);
      else if (key == "final_joiner") str(t.final_joiner);
      else if (key == "irregular_plurals") {
        if (!value.is_object()) throw input_error("templates.irregular_plurals must be an object");
        t.irregular_plurals.clear();
        for (const auto& [noun, plural] : value.items()) {
          if (!plural.is_string()) throw input_error("irregular plural for '" + noun + "' must be a string");
          t.irregular_plurals[noun] = plural.get<std::string>();
        }
      } else {
        throw input_error("unknown templates key '" + key + "'");
      }
    }
    t.validate();
    return t;
  }
};

}  // namespace piculet
