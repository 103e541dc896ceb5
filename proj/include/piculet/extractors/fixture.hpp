#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "piculet/digest.hpp"
#include "piculet/error.hpp"
#include "piculet/extractors/transport.hpp"
#include "piculet/image.hpp"
#include "piculet/wire_server.hpp"

namespace piculet {

enum class FailureMode {
  none,
  transport,  // connection dropped
  status,     // well-formed { "error" } reply with the given status
  malformed,  // 200 with a payload that breaks the schema
};

struct FailureSpec {
  FailureMode mode = FailureMode::none;
  int status = 503;
  std::string message = "injected failure";
  int remaining = -1;  // failures left before recovering; -1 = forever
};

// File-backed implementation of the extractor wire endpoints: maps the SHA-256 of
// the request image to canned responses. Used by tests and offline runs.
//
// File layout:
//   { "dim": 512,
//     "images": { "<sha256 hex>" | "file:<path>": { "detect": {...}, "ocr": {...}, "faces": {...} } },
//     "default": { ... },                       // optional, for unknown digests
//     "failures": { "ocr": { "mode": "status", "status": 503, "message": "..." } } }
// A missing endpoint entry means an empty result list.
class FixtureBackend {
 public:
  explicit FixtureBackend(std::size_t dim = 512) : dim_(dim) {}

  static std::shared_ptr<FixtureBackend> from_json(const nlohmann::json& j,
                                                   const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw input_error("fixture: top level must be an object");
    auto fx = std::make_shared<FixtureBackend>(j.value("dim", std::size_t{512}));
    if (j.contains("images")) {
      if (!j["images"].is_object()) throw input_error("fixture: 'images' must be an object");
      for (const auto& [key, entry] : j["images"].items()) {
        std::string digest = key;
        if (key.rfind("file:", 0) == 0) {
          auto p = std::filesystem::path(key.substr(5));
          if (p.is_relative()) p = base_dir / p;
          digest = sha256_hex(read_file_bytes(p));
        }
        fx->set_entry(digest, entry);
      }
    }
    if (j.contains("default")) fx->set_default(j["default"]);
    if (j.contains("failures")) {
      for (const auto& [endpoint, spec] : j["failures"].items()) {
        FailureSpec f;
        const auto mode = spec.value("mode", std::string("status"));
        if (mode == "transport") f.mode = FailureMode::transport;
        else if (mode == "status") f.mode = FailureMode::status;
        else if (mode == "malformed") f.mode = FailureMode::malformed;
        else throw input_error("fixture: unknown failure mode '" + mode + "'");
        f.status = spec.value("status", 503);
        f.message = spec.value("message", std::string("injected failure"));
        f.remaining = spec.value("times", -1);
        fx->set_failure(endpoint, f);
      }
    }
    return fx;
  }

  static std::shared_ptr<FixtureBackend> load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("fixture: cannot open " + path.string());
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw input_error("fixture: " + path.string() + " is not valid JSON");
    return from_json(j, path.parent_path());
  }

  std::size_t dim() const { return dim_; }

  // `entry` holds optional "detect" / "ocr" / "faces" response bodies.
  void set_entry(const std::string& digest, nlohmann::json entry) {
    std::lock_guard lock(mu_);
    images_[digest] = std::move(entry);
  }
  void set_default(nlohmann::json entry) {
    std::lock_guard lock(mu_);
    default_ = std::move(entry);
  }

  // `endpoint` is "detect", "ocr", "faces" or "faces/meta".
  void set_failure(const std::string& endpoint, FailureSpec spec) {
    std::lock_guard lock(mu_);
    failures_[endpoint] = spec;
  }
  void clear_failures() {
    std::lock_guard lock(mu_);
    failures_.clear();
  }

  // Requests seen for a path such as "/v1/detect" (failed ones included).
  std::size_t calls(std::string_view path) const {
    std::lock_guard lock(mu_);
    auto it = calls_.find(std::string(path));
    return it == calls_.end() ? 0 : it->second;
  }
  std::size_t total_calls() const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& [path, c] : calls_) n += c;
    return n;
  }
  void reset_calls() {
    std::lock_guard lock(mu_);
    calls_.clear();
  }

  WireReply handle(std::string_view method, std::string_view path, std::string_view body) {
    std::string endpoint;
    {
      std::lock_guard lock(mu_);
      ++calls_[std::string(path)];
    }
    if (path.rfind("/v1/", 0) == 0) endpoint = std::string(path.substr(4));

    if (method == "GET" && path == kHealthPath)
      return {200, nlohmann::json{{"status", "ok"}, {"backend", "fixture"}}.dump()};

    if (auto failure = take_failure(endpoint)) {
      switch (failure->mode) {
        case FailureMode::transport: return {0, {}};
        case FailureMode::status:
          return {failure->status, nlohmann::json{{"error", failure->message}}.dump()};
        case FailureMode::malformed: return {200, R"({"unexpected": true})"};
        case FailureMode::none: break;
      }
    }

    if (method == "GET" && path == kFacesMetaPath)
      return {200, nlohmann::json{{"dim", dim_}}.dump()};

    if (method != "POST" || (endpoint != "detect" && endpoint != "ocr" && endpoint != "faces"))
      return error_reply(404, "no such endpoint: " + std::string(method) + " " + std::string(path));

    auto req = nlohmann::json::parse(body, nullptr, false);
    if (req.is_discarded() || !req.is_object() || !req.contains("image") || !req["image"].is_string())
      return error_reply(400, "request body must be a JSON object with a base64 'image' field");
    Bytes image;
    try {
      image = base64_decode(req["image"].get<std::string>());
    } catch (const Error& e) {
      return error_reply(400, e.what());
    }
    const auto digest = sha256_hex(image);

    nlohmann::json entry;
    {
      std::lock_guard lock(mu_);
      auto it = images_.find(digest);
      if (it != images_.end()) entry = it->second;
      else if (default_) entry = *default_;
      else return error_reply(404, "no fixture for image " + digest);
    }
    if (entry.contains(endpoint)) return {200, entry[endpoint].dump()};
    return {200, empty_payload(endpoint).dump()};
  }

 private:
  static WireReply error_reply(int status, const std::string& msg) {
    return {status, nlohmann::json{{"error", msg}}.dump()};
  }

  static nlohmann::json empty_payload(const std::string& endpoint) {
    if (endpoint == "detect") return {{"detections", nlohmann::json::array()}};
    if (endpoint == "ocr") return {{"spans", nlohmann::json::array()}};
    return {{"faces", nlohmann::json::array()}};
  }

  std::optional<FailureSpec> take_failure(const std::string& endpoint) {
    std::lock_guard lock(mu_);
    auto it = failures_.find(endpoint);
    if (it == failures_.end() || it->second.mode == FailureMode::none || it->second.remaining == 0)
      return std::nullopt;
    if (it->second.remaining > 0) --it->second.remaining;
    return it->second;
  }

  std::size_t dim_;
  mutable std::mutex mu_;
  std::map<std::string, nlohmann::json> images_;
  std::optional<nlohmann::json> default_;
  std::map<std::string, FailureSpec> failures_;
  std::map<std::string, std::size_t> calls_;
};

// In-process transport over a FixtureBackend; replies pass through the same
// status/body decoding as the HTTP transport.
class FixtureTransport final : public ExtractorTransport {
 public:
  FixtureTransport(std::shared_ptr<FixtureBackend> backend, std::string name)
      : backend_(std::move(backend)), name_(std::move(name)) {}

  nlohmann::json post(std::string_view path, const nlohmann::json& body) override {
    return finish(backend_->handle("POST", path, body.dump()), path);
  }
  nlohmann::json get(std::string_view path) override {
    return finish(backend_->handle("GET", path, {}), path);
  }
  bool reachable() override { return true; }
  std::string describe() const override { return "fixture"; }

  const std::shared_ptr<FixtureBackend>& backend() const { return backend_; }

 private:
  nlohmann::json finish(const WireReply& reply, std::string_view path) {
    if (reply.status == 0) {
      auto e = transport_error(name_ + ": connection dropped on " + std::string(path));
      e.set_backend_name(name_);
      throw e;
    }
    return decode_reply(reply.status, reply.body, name_);
  }

  std::shared_ptr<FixtureBackend> backend_;
  std::string name_;
};

// Serves a FixtureBackend over HTTP at /v1/detect, /v1/ocr, /v1/faces, /v1/faces/meta.
class FixtureServer {
 public:
  explicit FixtureServer(std::shared_ptr<FixtureBackend> backend)
      : backend_(std::move(backend)),
        server_([b = backend_](std::string_view m, std::string_view p, std::string_view body) {
          return b->handle(m, p, body);
        }) {}

  int start(const std::string& host = "127.0.0.1", int port = 0) { return server_.start(host, port); }
  void stop() { server_.stop(); }
  std::string address() const { return server_.address(); }
  FixtureBackend& backend() { return *backend_; }

 private:
  std::shared_ptr<FixtureBackend> backend_;
  WireServer server_;
};

}  // namespace piculet
