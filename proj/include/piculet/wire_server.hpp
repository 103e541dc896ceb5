#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>

#include <httplib.h>

namespace piculet {

// Reply produced by an in-process service handler. status 0 means "drop the
// connection"; over HTTP it is sent as a 503 with a non-JSON body.
struct WireReply {
  int status = 200;
  std::string body;
};

using WireHandler =
    std::function<WireReply(std::string_view method, std::string_view path, std::string_view body)>;

// Exposes a WireHandler over HTTP on a background thread.
class WireServer {
 public:
  explicit WireServer(WireHandler handler) : handler_(std::move(handler)) {
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
      WireReply reply = handler_(req.method, req.path, req.body);
      if (reply.status == 0) {
        res.status = 503;
        res.set_content("Service Unavailable", "text/plain");
        return;
      }
      res.status = reply.status;
      res.set_content(reply.body, "application/json");
    };
    server_.Get(R"(/.*)", route);
    server_.Post(R"(/.*)", route);
  }

  WireServer(const WireServer&) = delete;
  WireServer& operator=(const WireServer&) = delete;

  ~WireServer() { stop(); }

  // Binds (port 0 picks a free port) and starts serving; returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    host_ = host;
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void stop() {
    if (thread_.joinable()) {
      server_.stop();
      thread_.join();
    }
  }

  int port() const { return port_; }
  std::string address() const { return "http://" + host_ + ":" + std::to_string(port_); }

 private:
  WireHandler handler_;
  httplib::Server server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = -1;
};

}  // namespace piculet
