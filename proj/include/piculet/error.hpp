#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace piculet {

enum class ErrorKind {
  input,       // bad caller input: non-image bytes, empty query, bad config
  transport,   // backend unreachable, timeout, non-JSON error page
  backend,     // backend answered with a well-formed `{ "error": ... }`
  protocol,    // backend answered 200 with a payload that violates the wire schema
  parse,       // dataset / file parse failure
  judge_parse, // judge output without the four scores
  range,       // judge score outside [0, 10]
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::input: return "input";
    case ErrorKind::transport: return "transport";
    case ErrorKind::backend: return "backend";
    case ErrorKind::protocol: return "protocol";
    case ErrorKind::parse: return "parse";
    case ErrorKind::judge_parse: return "judge_parse";
    case ErrorKind::range: return "range";
  }
  return "unknown";
}

// CLI exit codes: 0 success, 1 input, 2 backend, 3 parse/protocol.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::input: return 1;
    case ErrorKind::transport:
    case ErrorKind::backend: return 2;
    case ErrorKind::protocol:
    case ErrorKind::parse:
    case ErrorKind::judge_parse:
    case ErrorKind::range: return 3;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // Pipeline stage that raised the error ("input", "extract", "formulate", "query");
  // empty outside the gateway.
  const std::string& stage() const noexcept { return stage_; }
  void set_stage(std::string stage) { stage_ = std::move(stage); }

  // Number of attempts made before giving up (transport errors from retried calls).
  int attempts() const noexcept { return attempts_; }
  void set_attempts(int attempts) { attempts_ = attempts; }

  // Offending backend ("detection", "ocr", "face", "mllm", "judge"); empty if n/a.
  const std::string& backend_name() const noexcept { return backend_; }
  void set_backend_name(std::string name) { backend_ = std::move(name); }

  // HTTP status for backend errors, 0 otherwise.
  int status() const noexcept { return status_; }
  void set_status(int status) { status_ = status; }

  // Unparsed text kept for judge parse failures.
  const std::string& raw() const noexcept { return raw_; }
  void set_raw(std::string raw) { raw_ = std::move(raw); }

 private:
  ErrorKind kind_;
  std::string stage_;
  int attempts_ = 0;
  std::string backend_;
  int status_ = 0;
  std::string raw_;
};

inline Error input_error(const std::string& msg) { return Error(ErrorKind::input, msg); }
inline Error transport_error(const std::string& msg) { return Error(ErrorKind::transport, msg); }
inline Error protocol_error(const std::string& msg) { return Error(ErrorKind::protocol, msg); }
inline Error parse_error(const std::string& msg) { return Error(ErrorKind::parse, msg); }

inline Error backend_error(int status, const std::string& msg) {
  Error e(ErrorKind::backend, msg);
  e.set_status(status);
  return e;
}

}  // namespace piculet
