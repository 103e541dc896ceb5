#pragma once

#include <chrono>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "piculet/digest.hpp"
#include "piculet/error.hpp"
#include "piculet/extractors/client.hpp"
#include "piculet/extractors/fixture.hpp"
#include "piculet/formulation/formulate.hpp"
#include "piculet/gateway/cache.hpp"
#include "piculet/gateway/config.hpp"
#include "piculet/gateway/mllm.hpp"

namespace piculet {

struct StageTimings {
  double extract_ms = 0;
  double formulate_ms = 0;
  double query_ms = 0;
  double total_ms = 0;
  int mllm_attempts = 0;
  bool cache_hit = false;
};

struct PipelineResult {
  std::string answer;
  FormulatedQuery formulated;
  ExtractionBundle bundle;
  StageTimings timings;
  std::vector<BackendFailure> backend_failures;  // non-empty only in tolerate mode
};

inline nlohmann::json to_json(const PipelineResult& r, bool with_timings = true) {
  nlohmann::json j{{"answer", r.answer},
                   {"formulated", r.formulated},
                   {"bundle", r.bundle},
                   {"backend_failures", r.backend_failures}};
  if (with_timings)
    j["timings"] = {{"extract_ms", r.timings.extract_ms},
                    {"formulate_ms", r.timings.formulate_ms},
                    {"query_ms", r.timings.query_ms},
                    {"total_ms", r.timings.total_ms},
                    {"mllm_attempts", r.timings.mllm_attempts},
                    {"cache_hit", r.timings.cache_hit}};
  return j;
}

// extract -> formulate -> query, with exactly one MLLM inference per answer.
// Thread-safe; the cache is the only shared mutable state.
class Gateway {
 public:
  Gateway(std::shared_ptr<const ExtractorClient> extractors, PromptTemplateSet templates,
          std::shared_ptr<MllmBackend> mllm, MllmBackendConfig mllm_config,
          std::shared_ptr<ExtractionCache> cache = nullptr)
      : extractors_(std::move(extractors)),
        templates_(std::move(templates)),
        mllm_(std::move(mllm)),
        mllm_config_(std::move(mllm_config)),
        cache_(std::move(cache)) {
    templates_.validate();
    mllm_config_.validate();
    config_digest_ = extractor_config_digest(extractors_->config(), extractors_->gallery());
  }

  // Builds backends from the config document (HTTP services or a fixture file).
  static std::unique_ptr<Gateway> from_config(const GatewayConfig& c,
                                              std::shared_ptr<MllmBackend> mllm_override = nullptr) {
    ExtractorBackends backends;
    if (c.extractors.backend == "fixture") {
      auto fx = FixtureBackend::load(c.extractors.fixture);
      backends = {std::make_shared<FixtureTransport>(fx, "detection"),
                  std::make_shared<FixtureTransport>(fx, "ocr"),
                  std::make_shared<FixtureTransport>(fx, "face")};
    } else {
      backends = ExtractorBackends::http(c.extractors.config);
    }
    auto gallery = c.extractors.gallery.empty()
                       ? std::make_shared<CelebrityGallery>(c.extractors.config.face_dim)
                       : std::make_shared<CelebrityGallery>(CelebrityGallery::load(c.extractors.gallery));
    auto client = std::make_shared<ExtractorClient>(std::move(backends), c.extractors.config, gallery);
    auto mllm = mllm_override ? std::move(mllm_override) : make_chat_backend(c.mllm, "mllm");
    return std::make_unique<Gateway>(std::move(client), c.templates, std::move(mllm), c.mllm.client,
                                     std::make_shared<ExtractionCache>(c.cache_capacity));
  }

  static std::string extractor_config_digest(const ExtractorConfig& c, const CelebrityGallery& g) {
    nlohmann::json j{{"detection_confidence_threshold", c.detection_confidence_threshold},
                     {"ocr_confidence_threshold", c.ocr_confidence_threshold},
                     {"face_match_threshold", c.face_match_threshold},
                     {"face_dim", c.face_dim},
                     {"gallery", sha256_hex(g.to_json().dump())}};
    return sha256_hex(j.dump());
  }

  const ExtractorClient& extractors() const { return *extractors_; }
  const PromptTemplateSet& templates() const { return templates_; }
  const MllmBackendConfig& mllm_config() const { return mllm_config_; }
  MllmBackend& mllm() const { return *mllm_; }
  ExtractionCache* cache() const { return cache_.get(); }

  ExtractionBundle extract(std::span<const std::uint8_t> image, EnabledSet enabled, bool* cache_hit = nullptr) const {
    require_image(image);
    const CacheKey key{sha256_hex(image), enabled, config_digest_};
    if (cache_) {
      if (auto hit = cache_->get(key)) {
        if (cache_hit) *cache_hit = true;
        return *hit;
      }
    }
    if (cache_hit) *cache_hit = false;
    auto bundle = extractors_->extract_all(image, enabled);
    if (cache_ && bundle.failures.empty()) cache_->put(key, bundle);
    return bundle;
  }

  PipelineResult answer_pipeline(std::span<const std::uint8_t> image, std::string_view user_query,
                                 EnabledSet enabled) const {
    using clock = std::chrono::steady_clock;
    auto ms = [](clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };
    const auto t0 = clock::now();

    staged("input", [&] {
      require_image(image);
      if (user_query.empty()) throw input_error("query must not be empty");
    });

    PipelineResult r;
    staged("extract", [&] { r.bundle = extract(image, enabled, &r.timings.cache_hit); });
    const auto t1 = clock::now();
    staged("formulate", [&] { r.formulated = assemble_prompt(r.bundle, templates_, user_query); });
    const auto t2 = clock::now();
    staged("query", [&] {
      auto answer = query_mllm(image, r.formulated.text, *mllm_, mllm_config_);
      r.answer = std::move(answer.text);
      r.timings.mllm_attempts = answer.attempts;
    });
    const auto t3 = clock::now();

    r.backend_failures = r.bundle.failures;
    r.timings.extract_ms = ms(t1 - t0);
    r.timings.formulate_ms = ms(t2 - t1);
    r.timings.query_ms = ms(t3 - t2);
    r.timings.total_ms = ms(t3 - t0);
    return r;
  }

  nlohmann::json health() const {
    auto backends = extractors_->health();
    backends["mllm"] = {{"address", mllm_->describe()}, {"reachable", mllm_->reachable()}};
    bool ok = true;
    for (const auto& [_, b] : backends.items()) ok = ok && b["reachable"].get<bool>();
    return {{"status", ok ? "ok" : "degraded"}, {"backends", backends}};
  }

 private:
  template <typename Fn>
  static void staged(const char* stage, Fn&& fn) {
    try {
      fn();
    } catch (Error& e) {
      if (e.stage().empty()) e.set_stage(stage);
      throw;
    }
  }

  std::shared_ptr<const ExtractorClient> extractors_;
  PromptTemplateSet templates_;
  std::shared_ptr<MllmBackend> mllm_;
  MllmBackendConfig mllm_config_;
  std::shared_ptr<ExtractionCache> cache_;
  std::string config_digest_;
};

}  // namespace piculet
