#pragma once

#include <chrono>
#include <string>
#include <string_view>

#include <json.hpp>

#include "piculet/http.hpp"

namespace piculet {

inline constexpr std::string_view kDetectPath = "/v1/detect";
inline constexpr std::string_view kOcrPath = "/v1/ocr";
inline constexpr std::string_view kFacesPath = "/v1/faces";
inline constexpr std::string_view kFacesMetaPath = "/v1/faces/meta";
inline constexpr std::string_view kHealthPath = "/v1/health";

// One specialized-model service speaking the extractor wire protocol.
// Implementations must be safe for concurrent calls.
class ExtractorTransport {
 public:
  virtual ~ExtractorTransport() = default;

  // Body of a 200 reply; throws Error (transport / backend / protocol) otherwise.
  virtual nlohmann::json post(std::string_view path, const nlohmann::json& body) = 0;
  virtual nlohmann::json get(std::string_view path) = 0;

  // Whether the service answers at all; never throws.
  virtual bool reachable() = 0;

  virtual std::string describe() const = 0;
};

class HttpTransport final : public ExtractorTransport {
 public:
  HttpTransport(std::string address, std::chrono::milliseconds timeout, std::string name)
      : address_(std::move(address)), timeout_(timeout), name_(std::move(name)) {}

  nlohmann::json post(std::string_view path, const nlohmann::json& body) override {
    return http_post_json(address_, path, body, timeout_, name_);
  }

  nlohmann::json get(std::string_view path) override {
    return http_get_json(address_, path, timeout_, name_);
  }

  bool reachable() override {
    auto cli = make_client(address_, timeout_);
    return static_cast<bool>(cli.Get(std::string(kHealthPath)));
  }

  std::string describe() const override { return address_; }

 private:
  std::string address_;
  std::chrono::milliseconds timeout_;
  std::string name_;
};

}  // namespace piculet
