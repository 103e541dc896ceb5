#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "piculet/error.hpp"
#include "piculet/extractors/types.hpp"
#include "piculet/formulation/templates.hpp"
#include "piculet/gateway/mllm.hpp"

namespace piculet {

// Vision-chat backend selection shared by the answering model and the judge.
//   backend: "http" (POST /v1/chat), "echo" (returns the prompt), "rules" (substring table)
struct ChatSection {
  std::string backend = "http";
  MllmBackendConfig client;
  std::vector<RulesMllm::Rule> rules;
  std::string default_answer;
  std::string template_text;  // judge only; empty = built-in template
};

struct ExtractorsSection {
  std::string backend = "http";  // "http" or "fixture"
  std::filesystem::path fixture;
  std::filesystem::path gallery;
  ExtractorConfig config;
  EnabledSet enabled = EnabledSet::all();
};

// Single configuration document. Sections: extractors, templates, mllm, judge,
// cache, logging, server. Unknown keys are errors; relative paths resolve against
// the config file's directory.
struct GatewayConfig {
  ExtractorsSection extractors;
  PromptTemplateSet templates;
  ChatSection mllm;
  ChatSection judge;
  std::size_t cache_capacity = 1024;
  std::string log_level = "info";
  std::string host = "0.0.0.0";
  int port = 8080;

  static GatewayConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static GatewayConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // PICULET_{DETECTION,OCR,FACE,MLLM,JUDGE}_ENDPOINT override endpoint addresses.
  void apply_env();

  void validate() const {
    extractors.config.validate();
    templates.validate();
    mllm.client.validate();
    judge.client.validate();
    for (const auto* s : {&mllm, &judge})
      if (s->backend != "http" && s->backend != "echo" && s->backend != "rules")
        throw input_error("chat backend must be http, echo or rules (got '" + s->backend + "')");
    if (extractors.backend != "http" && extractors.backend != "fixture")
      throw input_error("extractors.backend must be http or fixture");
    if (extractors.backend == "fixture" && extractors.fixture.empty())
      throw input_error("extractors.fixture is required when extractors.backend is fixture");
    if (port < 0 || port > 65535) throw input_error("server.port out of range");
    if (log_level != "quiet" && log_level != "info" && log_level != "debug")
      throw input_error("logging.level must be quiet, info or debug");
  }
};

namespace config_detail {

inline void check_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                       const std::string& section) {
  if (!obj.is_object()) throw input_error(section + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw input_error("unknown key '" + key + "' in " + section);
  }
}

template <typename T>
T get(const nlohmann::json& obj, const char* key, T fallback, const std::string& section) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw input_error(section + "." + key + " has the wrong type");
  }
}

inline std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

inline BackendEndpoint endpoint(const nlohmann::json& j, BackendEndpoint def, const std::string& section) {
  if (j.is_null()) return def;
  check_keys(j, {"endpoint", "timeout_ms"}, section);
  def.address = get<std::string>(j, "endpoint", def.address, section);
  def.timeout = std::chrono::milliseconds(get<long long>(j, "timeout_ms", def.timeout.count(), section));
  return def;
}

inline ChatSection chat(const nlohmann::json& j, ChatSection s, const std::string& section, bool judge) {
  if (j.is_null()) return s;
  if (judge)
    check_keys(j, {"backend", "endpoint", "timeout_ms", "max_retries", "backoff_ms", "model", "rules",
                   "default_answer", "template"},
               section);
  else
    check_keys(j, {"backend", "endpoint", "timeout_ms", "max_retries", "backoff_ms", "model", "rules",
                   "default_answer"},
               section);
  s.backend = get<std::string>(j, "backend", s.backend, section);
  s.client.endpoint = get<std::string>(j, "endpoint", s.client.endpoint, section);
  s.client.timeout = std::chrono::milliseconds(get<long long>(j, "timeout_ms", s.client.timeout.count(), section));
  s.client.max_retries = get<int>(j, "max_retries", s.client.max_retries, section);
  s.client.backoff = std::chrono::milliseconds(get<long long>(j, "backoff_ms", s.client.backoff.count(), section));
  s.client.model = get<std::string>(j, "model", s.client.model, section);
  s.default_answer = get<std::string>(j, "default_answer", s.default_answer, section);
  s.template_text = get<std::string>(j, "template", s.template_text, section);
  if (j.contains("rules")) {
    if (!j["rules"].is_array()) throw input_error(section + ".rules must be an array");
    s.rules.clear();
    for (const auto& r : j["rules"]) {
      check_keys(r, {"contains", "answer"}, section + ".rules[]");
      s.rules.push_back({get<std::string>(r, "contains", "", section), get<std::string>(r, "answer", "", section)});
    }
  }
  return s;
}

inline nlohmann::json chat_json(const ChatSection& s, bool judge) {
  auto rules = nlohmann::json::array();
  for (const auto& r : s.rules) rules.push_back({{"contains", r.contains}, {"answer", r.answer}});
  nlohmann::json j{{"backend", s.backend},
                   {"endpoint", s.client.endpoint},
                   {"timeout_ms", s.client.timeout.count()},
                   {"max_retries", s.client.max_retries},
                   {"backoff_ms", s.client.backoff.count()},
                   {"model", s.client.model},
                   {"rules", rules},
                   {"default_answer", s.default_answer}};
  if (judge) j["template"] = s.template_text;
  return j;
}

}  // namespace config_detail

inline GatewayConfig GatewayConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  using namespace config_detail;
  GatewayConfig c;
  c.judge.client.model = "gpt-4v";
  if (j.is_null()) return c;
  check_keys(j, {"extractors", "templates", "mllm", "judge", "cache", "logging", "server"}, "config");

  if (j.contains("extractors")) {
    const auto& e = j["extractors"];
    const std::string sec = "extractors";
    check_keys(e, {"backend", "fixture", "gallery", "detection", "ocr", "face", "enabled",
                   "detection_confidence_threshold", "ocr_confidence_threshold",
                   "face_match_threshold", "face_dim", "tolerate_backend_failure"},
               sec);
    auto& x = c.extractors;
    x.backend = get<std::string>(e, "backend", x.backend, sec);
    x.fixture = resolve(get<std::string>(e, "fixture", "", sec), base);
    x.gallery = resolve(get<std::string>(e, "gallery", "", sec), base);
    x.config.detection = endpoint(e.value("detection", nlohmann::json()), x.config.detection, sec + ".detection");
    x.config.ocr = endpoint(e.value("ocr", nlohmann::json()), x.config.ocr, sec + ".ocr");
    x.config.face = endpoint(e.value("face", nlohmann::json()), x.config.face, sec + ".face");
    x.config.detection_confidence_threshold =
        get<double>(e, "detection_confidence_threshold", x.config.detection_confidence_threshold, sec);
    x.config.ocr_confidence_threshold =
        get<double>(e, "ocr_confidence_threshold", x.config.ocr_confidence_threshold, sec);
    x.config.face_match_threshold = get<double>(e, "face_match_threshold", x.config.face_match_threshold, sec);
    x.config.face_dim = get<std::size_t>(e, "face_dim", x.config.face_dim, sec);
    x.config.tolerate_backend_failure =
        get<bool>(e, "tolerate_backend_failure", x.config.tolerate_backend_failure, sec);
    if (e.contains("enabled")) x.enabled = e["enabled"].get<EnabledSet>();
  }
  if (j.contains("templates")) c.templates = PromptTemplateSet::from_json(j["templates"]);
  c.mllm = chat(j.value("mllm", nlohmann::json()), c.mllm, "mllm", false);
  c.judge = chat(j.value("judge", nlohmann::json()), c.judge, "judge", true);
  if (j.contains("cache")) {
    check_keys(j["cache"], {"capacity"}, "cache");
    c.cache_capacity = get<std::size_t>(j["cache"], "capacity", c.cache_capacity, "cache");
  }
  if (j.contains("logging")) {
    check_keys(j["logging"], {"level"}, "logging");
    c.log_level = get<std::string>(j["logging"], "level", c.log_level, "logging");
  }
  if (j.contains("server")) {
    check_keys(j["server"], {"host", "port"}, "server");
    c.host = get<std::string>(j["server"], "host", c.host, "server");
    c.port = get<int>(j["server"], "port", c.port, "server");
  }
  c.validate();
  return c;
}

inline GatewayConfig GatewayConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open config " + path.string());
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw input_error("config " + path.string() + " is not valid JSON");
  return from_json(j, path.parent_path());
}

inline nlohmann::json GatewayConfig::to_json() const {
  using namespace config_detail;
  auto ep = [](const BackendEndpoint& e) {
    return nlohmann::json{{"endpoint", e.address}, {"timeout_ms", e.timeout.count()}};
  };
  const auto& x = extractors;
  return {
      {"extractors",
       {{"backend", x.backend},
        {"fixture", x.fixture.string()},
        {"gallery", x.gallery.string()},
        {"detection", ep(x.config.detection)},
        {"ocr", ep(x.config.ocr)},
        {"face", ep(x.config.face)},
        {"enabled", x.enabled},
        {"detection_confidence_threshold", x.config.detection_confidence_threshold},
        {"ocr_confidence_threshold", x.config.ocr_confidence_threshold},
        {"face_match_threshold", x.config.face_match_threshold},
        {"face_dim", x.config.face_dim},
        {"tolerate_backend_failure", x.config.tolerate_backend_failure}}},
      {"templates", templates.to_json()},
      {"mllm", chat_json(mllm, false)},
      {"judge", chat_json(judge, true)},
      {"cache", {{"capacity", cache_capacity}}},
      {"logging", {{"level", log_level}}},
      {"server", {{"host", host}, {"port", port}}},
  };
}

inline void GatewayConfig::apply_env() {
  auto env = [](const char* name, std::string& target) {
    if (const char* v = std::getenv(name); v && *v) target = v;
  };
  env("PICULET_DETECTION_ENDPOINT", extractors.config.detection.address);
  env("PICULET_OCR_ENDPOINT", extractors.config.ocr.address);
  env("PICULET_FACE_ENDPOINT", extractors.config.face.address);
  env("PICULET_MLLM_ENDPOINT", mllm.client.endpoint);
  env("PICULET_JUDGE_ENDPOINT", judge.client.endpoint);
}

inline std::shared_ptr<MllmBackend> make_chat_backend(const ChatSection& s, const std::string& name) {
  if (s.backend == "echo") return std::make_shared<EchoMllm>();
  if (s.backend == "rules") return std::make_shared<RulesMllm>(s.rules, s.default_answer);
  return std::make_shared<HttpMllmBackend>(s.client.endpoint, s.client.timeout, name);
}

}  // namespace piculet
