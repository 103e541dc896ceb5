#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "piculet/digest.hpp"
#include "piculet/error.hpp"
#include "piculet/http.hpp"

namespace piculet {

struct MllmBackendConfig {
  std::string endpoint = "http://127.0.0.1:8000";
  std::chrono::milliseconds timeout{120000};
  int max_retries = 2;
  std::chrono::milliseconds backoff{200};  // doubled after every failed attempt
  std::string model = "qwen-vl-chat";

  void validate() const {
    if (timeout.count() <= 0) throw input_error("mllm timeout must be positive");
    if (max_retries < 0) throw input_error("mllm max_retries must be >= 0");
    if (backoff.count() < 0) throw input_error("mllm backoff must be >= 0");
  }
};

struct ChatRequest {
  std::string model;
  std::span<const std::uint8_t> image;
  std::string_view prompt;
};

// Vision-chat backend: one image + one prompt -> one answer.
class MllmBackend {
 public:
  virtual ~MllmBackend() = default;
  // Throws Error: transport (retryable), backend, protocol.
  virtual std::string chat(const ChatRequest& request) = 0;
  virtual bool reachable() { return true; }
  virtual std::string describe() const = 0;
};

// POST /v1/chat { "model", "image": base64, "prompt" } -> { "answer" }
class HttpMllmBackend final : public MllmBackend {
 public:
  HttpMllmBackend(std::string address, std::chrono::milliseconds timeout, std::string name = "mllm")
      : address_(std::move(address)), timeout_(timeout), name_(std::move(name)) {}

  std::string chat(const ChatRequest& r) override {
    nlohmann::json body{{"model", r.model}, {"image", base64_encode(r.image)}, {"prompt", r.prompt}};
    auto reply = http_post_json(address_, "/v1/chat", body, timeout_, name_);
    if (!reply.contains("answer") || !reply["answer"].is_string()) {
      auto e = protocol_error(name_ + ": reply lacks string 'answer'");
      e.set_backend_name(name_);
      throw e;
    }
    return reply["answer"].get<std::string>();
  }

  bool reachable() override {
    auto cli = make_client(address_, timeout_);
    return static_cast<bool>(cli.Get("/v1/health"));
  }

  std::string describe() const override { return address_; }

 private:
  std::string address_;
  std::chrono::milliseconds timeout_;
  std::string name_;
};

// Returns the prompt verbatim.
class EchoMllm final : public MllmBackend {
 public:
  std::string chat(const ChatRequest& r) override { return std::string(r.prompt); }
  std::string describe() const override { return "echo"; }
};

// Answers with the first rule whose needle occurs in the prompt, else `fallback`.
class RulesMllm final : public MllmBackend {
 public:
  struct Rule {
    std::string contains;
    std::string answer;
  };

  RulesMllm(std::vector<Rule> rules, std::string fallback)
      : rules_(std::move(rules)), fallback_(std::move(fallback)) {}

  std::string chat(const ChatRequest& r) override {
    for (const auto& rule : rules_)
      if (r.prompt.find(rule.contains) != std::string_view::npos) return rule.answer;
    return fallback_;
  }
  std::string describe() const override { return "rules"; }

 private:
  std::vector<Rule> rules_;
  std::string fallback_;
};

// Adapts a callable; used by tests and scripted runs.
class FunctionMllm final : public MllmBackend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit FunctionMllm(Fn fn, std::string name = "function")
      : fn_(std::move(fn)), name_(std::move(name)) {}
  std::string chat(const ChatRequest& r) override { return fn_(r); }
  std::string describe() const override { return name_; }

 private:
  Fn fn_;
  std::string name_;
};

// Counts chat calls made through it.
class CountingMllm final : public MllmBackend {
 public:
  explicit CountingMllm(std::shared_ptr<MllmBackend> inner) : inner_(std::move(inner)) {}
  std::string chat(const ChatRequest& r) override {
    calls_.fetch_add(1);
    return inner_->chat(r);
  }
  bool reachable() override { return inner_->reachable(); }
  std::string describe() const override { return inner_->describe(); }
  std::size_t calls() const { return calls_.load(); }
  void reset() { calls_.store(0); }

 private:
  std::shared_ptr<MllmBackend> inner_;
  std::atomic<std::size_t> calls_{0};
};

struct MllmAnswer {
  std::string text;
  int attempts = 0;
};

// Retries transport failures only, with exponential backoff; well-formed error
// replies and protocol violations fail immediately.
inline MllmAnswer query_mllm(std::span<const std::uint8_t> image, std::string_view prompt,
                             MllmBackend& backend, const MllmBackendConfig& config) {
  if (prompt.empty()) throw input_error("prompt must not be empty");
  auto delay = config.backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      return {backend.chat({config.model, image, prompt}), attempt};
    } catch (Error& e) {
      e.set_attempts(attempt);
      if (e.backend_name().empty()) e.set_backend_name("mllm");
      if (e.kind() != ErrorKind::transport || attempt > config.max_retries) throw;
    }
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

}  // namespace piculet
