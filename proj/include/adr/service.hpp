#pragma once

#include <memory>
#include <string>

#include "adr/error.hpp"
#include "adr/runtime.hpp"

namespace adr {

// HTTP status for an error code; the body is always {code, message, detail}.
int http_status(ErrorCode code);
Json error_body(ErrorCode code, const std::string& message, const std::string& detail = {});

// What a student sees at their current node. Only the assigned task of the
// current phase is included while the run is active; the full task grid
// appears once the run has finished.
Json current_view(const Engine& engine, const std::string& run_id);

// JSON API over an Engine.
class HttpService {
 public:
  explicit HttpService(Engine& engine);
  ~HttpService();

  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  // Port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  // Serves on a background thread until stop().
  void start();
  void stop();
  // /healthz answers 503 until the service is marked ready.
  void set_ready(bool ready);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace adr
