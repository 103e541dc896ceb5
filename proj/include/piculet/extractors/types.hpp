#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "piculet/error.hpp"

namespace piculet {

using nlohmann::json;

enum class ExtractorKind : std::uint8_t { detection = 0, ocr = 1, face = 2 };

inline constexpr std::array<ExtractorKind, 3> kAllExtractorKinds = {
    ExtractorKind::detection, ExtractorKind::ocr, ExtractorKind::face};

inline const char* to_string(ExtractorKind k) {
  switch (k) {
    case ExtractorKind::detection: return "detection";
    case ExtractorKind::ocr: return "ocr";
    case ExtractorKind::face: return "face";
  }
  return "?";
}

// Accepts the canonical names plus the short forms used on the command line.
inline ExtractorKind parse_extractor_kind(std::string_view s) {
  if (s == "detection" || s == "det" || s == "detect") return ExtractorKind::detection;
  if (s == "ocr") return ExtractorKind::ocr;
  if (s == "face" || s == "faces") return ExtractorKind::face;
  throw input_error("unknown extractor kind '" + std::string(s) + "' (expected det, ocr or face)");
}

// Subset of {detection, ocr, face}.
class EnabledSet {
 public:
  constexpr EnabledSet() = default;
  constexpr EnabledSet(std::initializer_list<ExtractorKind> kinds) {
    for (auto k : kinds) insert(k);
  }

  static constexpr EnabledSet all() {
    return {ExtractorKind::detection, ExtractorKind::ocr, ExtractorKind::face};
  }
  static constexpr EnabledSet none() { return {}; }

  constexpr void insert(ExtractorKind k) { bits_ |= mask(k); }
  constexpr void erase(ExtractorKind k) { bits_ &= static_cast<std::uint8_t>(~mask(k)); }
  constexpr bool contains(ExtractorKind k) const { return (bits_ & mask(k)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }

  std::vector<ExtractorKind> kinds() const {
    std::vector<ExtractorKind> out;
    for (auto k : kAllExtractorKinds)
      if (contains(k)) out.push_back(k);
    return out;
  }

  // "det,ocr,face"-style list; empty string and "none" mean the empty set.
  static EnabledSet parse(std::string_view list) {
    EnabledSet s;
    if (list.empty() || list == "none") return s;
    std::size_t pos = 0;
    while (pos <= list.size()) {
      auto comma = list.find(',', pos);
      auto item = list.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
      while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
      while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
      if (!item.empty()) s.insert(parse_extractor_kind(item));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    return s;
  }

  std::string to_string() const {
    std::string out;
    for (auto k : kinds()) {
      if (!out.empty()) out += ',';
      out += piculet::to_string(k);
    }
    return out.empty() ? "none" : out;
  }

  friend constexpr bool operator==(EnabledSet, EnabledSet) = default;

 private:
  static constexpr std::uint8_t mask(ExtractorKind k) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(k));
  }
  std::uint8_t bits_ = 0;
};

inline void to_json(json& j, const EnabledSet& s) {
  j = json::array();
  for (auto k : s.kinds()) j.push_back(to_string(k));
}

inline void from_json(const json& j, EnabledSet& s) {
  if (!j.is_array()) throw input_error("enabled set must be an array of extractor names");
  s = EnabledSet{};
  for (const auto& v : j) {
    if (!v.is_string()) throw input_error("enabled set entries must be strings");
    s.insert(parse_extractor_kind(v.get<std::string>()));
  }
}

struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  bool valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
           x1 >= 0 && y1 >= 0 && x1 < x2 && y1 < y2;
  }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline void to_json(json& j, const BoundingBox& b) { j = json::array({b.x1, b.y1, b.x2, b.y2}); }

struct Detection {
  std::string label;
  double confidence = 0;
  BoundingBox box;
  friend bool operator==(const Detection&, const Detection&) = default;
};

inline void to_json(json& j, const Detection& d) {
  j = json{{"label", d.label}, {"confidence", d.confidence}, {"box", d.box}};
}

struct OcrSpan {
  std::string text;
  double confidence = 0;
  BoundingBox box;
  friend bool operator==(const OcrSpan&, const OcrSpan&) = default;
};

inline void to_json(json& j, const OcrSpan& s) {
  j = json{{"text", s.text}, {"confidence", s.confidence}, {"box", s.box}};
}

struct FaceEmbedding {
  std::vector<double> vector;
  BoundingBox box;
};

struct FaceMatch {
  std::string name;
  double similarity = 0;
  BoundingBox box;
  friend bool operator==(const FaceMatch&, const FaceMatch&) = default;
};

inline void to_json(json& j, const FaceMatch& m) {
  j = json{{"name", m.name}, {"similarity", m.similarity}, {"box", m.box}};
}

struct BackendFailure {
  std::string backend;
  std::string error;
  friend bool operator==(const BackendFailure&, const BackendFailure&) = default;
};

inline void to_json(json& j, const BackendFailure& f) {
  j = json{{"backend", f.backend}, {"error", f.error}};
}

// Results of one extraction pass. A result list is engaged iff its kind is in `enabled`.
struct ExtractionBundle {
  std::optional<std::vector<Detection>> detections;
  std::optional<std::vector<OcrSpan>> ocr;
  std::optional<std::vector<FaceMatch>> faces;
  std::string image_digest;
  EnabledSet enabled;
  // Only populated when tolerate_backend_failure substituted an empty result.
  std::vector<BackendFailure> failures;

  friend bool operator==(const ExtractionBundle&, const ExtractionBundle&) = default;
};

inline void to_json(json& j, const ExtractionBundle& b) {
  j = json::object();
  j["image_digest"] = b.image_digest;
  j["enabled"] = b.enabled;
  if (b.detections) j["detections"] = *b.detections;
  if (b.ocr) j["ocr"] = *b.ocr;
  if (b.faces) j["faces"] = *b.faces;
  j["failures"] = b.failures;
}

inline BoundingBox box_from_json(const json& j) {
  if (j.is_null()) return {};
  if (!j.is_array() || j.size() != 4) throw parse_error("box must be [x1, y1, x2, y2]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

// Lenient reader for stored bundles: boxes, confidences and digest may be omitted,
// and `enabled` defaults to the kinds whose lists are present.
inline ExtractionBundle bundle_from_json(const json& j) {
  if (!j.is_object()) throw parse_error("bundle must be a JSON object");
  ExtractionBundle b;
  b.image_digest = j.value("image_digest", "");
  if (j.contains("detections")) {
    b.detections.emplace();
    for (const auto& d : j.at("detections"))
      b.detections->push_back({d.at("label").get<std::string>(), d.value("confidence", 1.0),
                               box_from_json(d.value("box", json()))});
    b.enabled.insert(ExtractorKind::detection);
  }
  if (j.contains("ocr")) {
    b.ocr.emplace();
    for (const auto& s : j.at("ocr"))
      b.ocr->push_back({s.at("text").get<std::string>(), s.value("confidence", 1.0),
                        box_from_json(s.value("box", json()))});
    b.enabled.insert(ExtractorKind::ocr);
  }
  if (j.contains("faces")) {
    b.faces.emplace();
    for (const auto& f : j.at("faces"))
      b.faces->push_back({f.at("name").get<std::string>(), f.value("similarity", 1.0),
                          box_from_json(f.value("box", json()))});
    b.enabled.insert(ExtractorKind::face);
  }
  if (j.contains("enabled")) j.at("enabled").get_to(b.enabled);
  if (j.contains("failures"))
    for (const auto& f : j.at("failures"))
      b.failures.push_back({f.at("backend").get<std::string>(), f.at("error").get<std::string>()});
  return b;
}

struct BackendEndpoint {
  std::string address;  // "http://host:port"
  std::chrono::milliseconds timeout{10000};
};

struct ExtractorConfig {
  double detection_confidence_threshold = 0.5;
  double ocr_confidence_threshold = 0.5;
  double face_match_threshold = 0.40;
  std::size_t face_dim = 512;
  BackendEndpoint detection{"http://127.0.0.1:8101"};
  BackendEndpoint ocr{"http://127.0.0.1:8102"};
  BackendEndpoint face{"http://127.0.0.1:8103"};
  bool tolerate_backend_failure = false;

  void validate() const {
    auto in_unit = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; };
    if (!in_unit(detection_confidence_threshold))
      throw input_error("detection_confidence_threshold must be in [0,1]");
    if (!in_unit(ocr_confidence_threshold))
      throw input_error("ocr_confidence_threshold must be in [0,1]");
    if (!in_unit(face_match_threshold)) throw input_error("face_match_threshold must be in [0,1]");
    if (face_dim == 0) throw input_error("face_dim must be positive");
    for (const auto* ep : {&detection, &ocr, &face})
      if (ep->timeout.count() <= 0) throw input_error("backend timeouts must be positive");
  }

  const BackendEndpoint& endpoint(ExtractorKind k) const {
    switch (k) {
      case ExtractorKind::detection: return detection;
      case ExtractorKind::ocr: return ocr;
      case ExtractorKind::face: return face;
    }
    return detection;
  }
};

}  // namespace piculet
