#pragma once

#include <atomic>
#include <cctype>
#include <exception>
#include <future>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "piculet/digest.hpp"
#include "piculet/error.hpp"
#include "piculet/extractors/coco.hpp"
#include "piculet/extractors/gallery.hpp"
#include "piculet/extractors/transport.hpp"
#include "piculet/extractors/types.hpp"
#include "piculet/image.hpp"

namespace piculet {

namespace wire {

inline Error malformed(std::string_view who, const std::string& what) {
  auto e = protocol_error(std::string(who) + ": malformed payload: " + what);
  e.set_backend_name(std::string(who));
  return e;
}

inline BoundingBox parse_box(const json& j, std::string_view who) {
  if (!j.is_array() || j.size() != 4) throw malformed(who, "box must be [x1,y1,x2,y2]");
  for (const auto& v : j)
    if (!v.is_number()) throw malformed(who, "box coordinates must be numbers");
  BoundingBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw malformed(who, "box must satisfy 0<=x1<x2, 0<=y1<y2");
  return b;
}

inline double parse_confidence(const json& obj, std::string_view who) {
  if (!obj.contains("confidence") || !obj["confidence"].is_number())
    throw malformed(who, "missing numeric 'confidence'");
  const double c = obj["confidence"].get<double>();
  if (!(c >= 0.0 && c <= 1.0)) throw malformed(who, "confidence outside [0,1]");
  return c;
}

inline const json& require_array(const json& payload, const char* field, std::string_view who) {
  if (!payload.contains(field) || !payload[field].is_array())
    throw malformed(who, std::string("missing '") + field + "' array");
  return payload[field];
}

inline std::string trim(std::string_view s) {
  auto issp = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && issp(s.front())) s.remove_prefix(1);
  while (!s.empty() && issp(s.back())) s.remove_suffix(1);
  return std::string(s);
}

// /v1/detect payload -> detections at or above the threshold, backend order kept.
inline std::vector<Detection> parse_detections(const json& payload, double threshold) {
  std::vector<Detection> out;
  for (const auto& d : require_array(payload, "detections", "detection")) {
    if (!d.is_object() || !d.contains("label") || !d["label"].is_string())
      throw malformed("detection", "detection without string 'label'");
    Detection det{d["label"].get<std::string>(), parse_confidence(d, "detection"),
                  parse_box(d.value("box", json()), "detection")};
    if (det.label.empty()) throw malformed("detection", "empty label");
    if (!is_coco_label(det.label))
      throw malformed("detection", "label '" + det.label + "' is not in the COCO-80 vocabulary");
    if (det.confidence >= threshold) out.push_back(std::move(det));
  }
  return out;
}

// /v1/ocr payload -> spans at or above the threshold; whitespace-only spans dropped.
inline std::vector<OcrSpan> parse_spans(const json& payload, double threshold) {
  std::vector<OcrSpan> out;
  for (const auto& s : require_array(payload, "spans", "ocr")) {
    if (!s.is_object() || !s.contains("text") || !s["text"].is_string())
      throw malformed("ocr", "span without string 'text'");
    OcrSpan span{trim(s["text"].get<std::string>()), parse_confidence(s, "ocr"),
                 parse_box(s.value("box", json()), "ocr")};
    if (span.text.empty()) continue;
    if (span.confidence >= threshold) out.push_back(std::move(span));
  }
  return out;
}

inline std::vector<FaceEmbedding> parse_faces(const json& payload, std::size_t dim) {
  std::vector<FaceEmbedding> out;
  for (const auto& f : require_array(payload, "faces", "face")) {
    if (!f.is_object() || !f.contains("embedding") || !f["embedding"].is_array())
      throw malformed("face", "face without 'embedding' array");
    FaceEmbedding emb;
    bool nonzero = false;
    for (const auto& v : f["embedding"]) {
      if (!v.is_number()) throw malformed("face", "embedding values must be numbers");
      emb.vector.push_back(v.get<double>());
      nonzero = nonzero || emb.vector.back() != 0.0;
    }
    if (emb.vector.size() != dim)
      throw malformed("face", "embedding has dimension " + std::to_string(emb.vector.size()) +
                                  ", expected " + std::to_string(dim));
    if (!nonzero) throw malformed("face", "all-zero embedding");
    emb.box = parse_box(f.value("box", json()), "face");
    out.push_back(std::move(emb));
  }
  return out;
}

inline json request_body(std::span<const std::uint8_t> image) {
  return json{{"image", base64_encode(image)}};
}

}  // namespace wire

inline std::vector<Detection> detect_objects(std::span<const std::uint8_t> image,
                                             ExtractorTransport& backend,
                                             const ExtractorConfig& config) {
  require_image(image);
  return wire::parse_detections(backend.post(kDetectPath, wire::request_body(image)),
                                config.detection_confidence_threshold);
}

inline std::vector<OcrSpan> recognize_text(std::span<const std::uint8_t> image,
                                           ExtractorTransport& backend,
                                           const ExtractorConfig& config) {
  require_image(image);
  return wire::parse_spans(backend.post(kOcrPath, wire::request_body(image)),
                           config.ocr_confidence_threshold);
}

inline std::vector<FaceMatch> match_faces(const std::vector<FaceEmbedding>& faces,
                                          const CelebrityGallery& gallery, double threshold) {
  std::vector<FaceMatch> out;
  for (const auto& f : faces)
    if (auto m = match_embedding(f.vector, gallery, threshold))
      out.push_back({m->name, m->similarity, f.box});
  return out;
}

inline std::vector<FaceMatch> recognize_faces(std::span<const std::uint8_t> image,
                                              ExtractorTransport& backend,
                                              const CelebrityGallery& gallery,
                                              const ExtractorConfig& config) {
  require_image(image);
  auto faces = wire::parse_faces(backend.post(kFacesPath, wire::request_body(image)), config.face_dim);
  if (gallery.empty()) return {};
  return match_faces(faces, gallery, config.face_match_threshold);
}

struct ExtractorBackends {
  std::shared_ptr<ExtractorTransport> detection;
  std::shared_ptr<ExtractorTransport> ocr;
  std::shared_ptr<ExtractorTransport> face;

  ExtractorTransport* get(ExtractorKind k) const {
    switch (k) {
      case ExtractorKind::detection: return detection.get();
      case ExtractorKind::ocr: return ocr.get();
      case ExtractorKind::face: return face.get();
    }
    return nullptr;
  }

  static ExtractorBackends http(const ExtractorConfig& config) {
    auto make = [&](ExtractorKind k) {
      const auto& ep = config.endpoint(k);
      return std::make_shared<HttpTransport>(ep.address, ep.timeout, to_string(k));
    };
    return {make(ExtractorKind::detection), make(ExtractorKind::ocr), make(ExtractorKind::face)};
  }
};

// The three specialized-model clients plus the celebrity gallery.
// Safe for concurrent use.
class ExtractorClient {
 public:
  ExtractorClient(ExtractorBackends backends, ExtractorConfig config,
                  std::shared_ptr<const CelebrityGallery> gallery)
      : backends_(std::move(backends)), config_(std::move(config)), gallery_(std::move(gallery)) {
    config_.validate();
    if (!gallery_) gallery_ = std::make_shared<CelebrityGallery>(config_.face_dim);
    if (!gallery_->empty() && gallery_->dim() != config_.face_dim)
      throw input_error("gallery dimension " + std::to_string(gallery_->dim()) +
                        " does not match face_dim " + std::to_string(config_.face_dim));
  }

  const ExtractorConfig& config() const { return config_; }
  const CelebrityGallery& gallery() const { return *gallery_; }
  const ExtractorBackends& backends() const { return backends_; }

  std::vector<Detection> detect_objects(std::span<const std::uint8_t> image) const {
    return piculet::detect_objects(image, require(ExtractorKind::detection), config_);
  }

  std::vector<OcrSpan> recognize_text(std::span<const std::uint8_t> image) const {
    return piculet::recognize_text(image, require(ExtractorKind::ocr), config_);
  }

  std::vector<FaceMatch> recognize_faces(std::span<const std::uint8_t> image) const {
    verify_face_dim();
    return piculet::recognize_faces(image, require(ExtractorKind::face), *gallery_, config_);
  }

  // Runs the enabled extractors concurrently. Without tolerate_backend_failure, any
  // failure fails the call with an error naming the backend.
  ExtractionBundle extract_all(std::span<const std::uint8_t> image, EnabledSet enabled) const {
    require_image(image);
    ExtractionBundle bundle;
    bundle.image_digest = sha256_hex(image);
    bundle.enabled = enabled;

    std::future<std::vector<Detection>> det;
    std::future<std::vector<OcrSpan>> ocr;
    std::future<std::vector<FaceMatch>> face;
    if (enabled.contains(ExtractorKind::detection))
      det = std::async(std::launch::async, [&] { return detect_objects(image); });
    if (enabled.contains(ExtractorKind::ocr))
      ocr = std::async(std::launch::async, [&] { return recognize_text(image); });
    if (enabled.contains(ExtractorKind::face))
      face = std::async(std::launch::async, [&] { return recognize_faces(image); });

    std::exception_ptr first_error;
    ExtractorKind failed_kind{};
    auto collect = [&](auto& fut, auto& slot, ExtractorKind kind) {
      if (!fut.valid()) return;
      try {
        slot = fut.get();
      } catch (...) {
        if (!config_.tolerate_backend_failure) {
          if (!first_error) {
            first_error = std::current_exception();
            failed_kind = kind;
          }
          return;
        }
        bundle.failures.push_back({to_string(kind), describe(std::current_exception())});
        slot.emplace();
      }
    };
    collect(det, bundle.detections, ExtractorKind::detection);
    collect(ocr, bundle.ocr, ExtractorKind::ocr);
    collect(face, bundle.faces, ExtractorKind::face);

    if (first_error) rethrow_named(first_error, failed_kind);
    return bundle;
  }

  // Backend reachability keyed by extractor name.
  json health() const {
    json out = json::object();
    for (auto k : kAllExtractorKinds) {
      auto* b = backends_.get(k);
      out[to_string(k)] = {{"address", b ? b->describe() : ""},
                           {"reachable", b ? b->reachable() : false}};
    }
    return out;
  }

 private:
  ExtractorTransport& require(ExtractorKind k) const {
    auto* b = backends_.get(k);
    if (!b) throw input_error(std::string("no backend configured for ") + to_string(k));
    return *b;
  }

  void verify_face_dim() const {
    if (face_dim_verified_.load()) return;
    auto meta = require(ExtractorKind::face).get(kFacesMetaPath);
    if (!meta.contains("dim") || !meta["dim"].is_number_unsigned())
      throw wire::malformed("face", "/v1/faces/meta without integer 'dim'");
    if (meta["dim"].get<std::size_t>() != config_.face_dim)
      throw wire::malformed("face", "backend embedding dim " + meta["dim"].dump() +
                                        " differs from configured face_dim " +
                                        std::to_string(config_.face_dim));
    face_dim_verified_.store(true);
  }

  static std::string describe(std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      return e.what();
    } catch (...) {
      return "unknown error";
    }
  }

  [[noreturn]] static void rethrow_named(std::exception_ptr ep, ExtractorKind kind) {
    const std::string name = to_string(kind);
    try {
      std::rethrow_exception(ep);
    } catch (const Error& e) {
      Error named(e.kind(), name + " backend failed: " + e.what());
      named.set_backend_name(name);
      named.set_status(e.status());
      throw named;
    } catch (const std::exception& e) {
      Error named(ErrorKind::transport, name + " backend failed: " + e.what());
      named.set_backend_name(name);
      throw named;
    }
  }

  ExtractorBackends backends_;
  ExtractorConfig config_;
  std::shared_ptr<const CelebrityGallery> gallery_;
  mutable std::atomic<bool> face_dim_verified_{false};
};

}  // namespace piculet
