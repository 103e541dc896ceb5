#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "piculet/digest.hpp"
#include "piculet/error.hpp"
#include "piculet/gateway/pipeline.hpp"

namespace piculet {

struct AnswerRequest {
  Bytes image;
  std::string query;
  EnabledSet enabled;
};

// JSON: { "image": base64, "query": str, "enabled"?: [names] }
// multipart: file field "image", text fields "query" and optional "enabled" ("det,ocr").
inline AnswerRequest parse_answer_request(const httplib::Request& req, EnabledSet default_enabled) {
  AnswerRequest out{{}, {}, default_enabled};
  if (req.is_multipart_form_data()) {
    if (!req.has_file("image")) throw input_error("multipart request needs an 'image' part");
    const auto& img = req.get_file_value("image").content;
    out.image.assign(img.begin(), img.end());
    if (req.has_file("query")) out.query = req.get_file_value("query").content;
    if (req.has_file("enabled")) out.enabled = EnabledSet::parse(req.get_file_value("enabled").content);
    return out;
  }
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw input_error("request body must be a JSON object");
  if (!j.contains("image") || !j["image"].is_string()) throw input_error("missing base64 'image'");
  if (!j.contains("query") || !j["query"].is_string()) throw input_error("missing string 'query'");
  out.image = base64_decode(j["image"].get<std::string>());
  out.query = j["query"].get<std::string>();
  if (j.contains("enabled")) {
    if (j["enabled"].is_string()) out.enabled = EnabledSet::parse(j["enabled"].get<std::string>());
    else out.enabled = j["enabled"].get<EnabledSet>();
  }
  return out;
}

inline int http_status_for(const Error& e) { return e.kind() == ErrorKind::input ? 400 : 502; }

// POST /v1/answer and GET /v1/health over a Gateway.
class GatewayServer {
 public:
  GatewayServer(std::shared_ptr<const Gateway> gateway, EnabledSet default_enabled)
      : gateway_(std::move(gateway)), default_enabled_(default_enabled) {
    server_.Post("/v1/answer", [this](const httplib::Request& req, httplib::Response& res) {
      std::string stage = "input";
      try {
        auto r = parse_answer_request(req, default_enabled_);
        stage = "pipeline";
        auto result = gateway_->answer_pipeline(r.image, r.query, r.enabled);
        res.set_content(to_json(result).dump(), "application/json");
      } catch (const Error& e) {
        res.status = http_status_for(e);
        res.set_content(nlohmann::json{{"error", e.what()}, {"stage", e.stage().empty() ? stage : e.stage()}}.dump(),
                        "application/json");
      } catch (const std::exception& e) {
        res.status = 500;
        res.set_content(nlohmann::json{{"error", e.what()}, {"stage", stage}}.dump(), "application/json");
      }
    });
    server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(gateway_->health().dump(), "application/json");
    });
  }

  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;
  ~GatewayServer() { stop(); }

  // Blocking.
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  // Background serving; port 0 picks a free port. Returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  std::shared_ptr<const Gateway> gateway_;
  EnabledSet default_enabled_;
  httplib::Server server_;
  std::thread thread_;
};

// Runs the gateway service until the process is stopped.
inline void serve(const GatewayConfig& config) {
  auto gateway = std::shared_ptr<const Gateway>(Gateway::from_config(config));
  GatewayServer server(gateway, config.extractors.enabled);
  if (!server.listen(config.host, config.port))
    throw input_error("cannot listen on " + config.host + ":" + std::to_string(config.port));
}

}  // namespace piculet
