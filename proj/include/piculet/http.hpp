#pragma once

#include <chrono>
#include <string>
#include <string_view>

#include <httplib.h>
#include <json.hpp>

#include "piculet/error.hpp"

namespace piculet {

// Maps an HTTP reply onto the wire contract: 200 + JSON body, or non-200 + { "error": str }.
// `who` names the backend in error messages.
inline nlohmann::json decode_reply(int status, const std::string& body, std::string_view who) {
  const std::string name(who);
  if (status == 200) {
    auto j = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) {
      auto e = protocol_error(name + ": response body is not a JSON object");
      e.set_backend_name(name);
      throw e;
    }
    return j;
  }
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("error") && j["error"].is_string()) {
    auto e = backend_error(status, name + ": HTTP " + std::to_string(status) + ": " +
                                       j["error"].get<std::string>());
    e.set_backend_name(name);
    throw e;
  }
  auto e = transport_error(name + ": HTTP " + std::to_string(status) + " without an error body");
  e.set_backend_name(name);
  e.set_status(status);
  throw e;
}

inline httplib::Client make_client(const std::string& address, std::chrono::milliseconds timeout) {
  httplib::Client cli(address);
  const auto sec = static_cast<time_t>(timeout.count() / 1000);
  const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
  return cli;
}

inline nlohmann::json http_post_json(const std::string& address, std::string_view path,
                                     const nlohmann::json& body, std::chrono::milliseconds timeout,
                                     std::string_view who) {
  auto cli = make_client(address, timeout);
  auto res = cli.Post(std::string(path), body.dump(), "application/json");
  if (!res) {
    auto e = transport_error(std::string(who) + ": POST " + address + std::string(path) +
                             " failed: " + httplib::to_string(res.error()));
    e.set_backend_name(std::string(who));
    throw e;
  }
  return decode_reply(res->status, res->body, who);
}

inline nlohmann::json http_get_json(const std::string& address, std::string_view path,
                                    std::chrono::milliseconds timeout, std::string_view who) {
  auto cli = make_client(address, timeout);
  auto res = cli.Get(std::string(path));
  if (!res) {
    auto e = transport_error(std::string(who) + ": GET " + address + std::string(path) +
                             " failed: " + httplib::to_string(res.error()));
    e.set_backend_name(std::string(who));
    throw e;
  }
  return decode_reply(res->status, res->body, who);
}

}  // namespace piculet
