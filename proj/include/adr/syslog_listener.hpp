#pragma once

#include <atomic>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "adr/runtime.hpp"

namespace adr {

struct IngestCounts {
  std::uint64_t ingested = 0;
  std::uint64_t dead_lettered = 0;
};

// Parses one syslog line and stores it. With `instance_id` the command goes
// to that instance; otherwise it is routed by sandbox uid. Malformed lines
// and commands of unknown sandboxes are dead-lettered, never dropped.
// Returns true when the command was ingested.
bool ingest_syslog_line(Engine& engine, std::string_view line, const std::optional<std::string>& instance_id,
                        std::optional<int> default_year = std::nullopt);

// LF- or octet-counting-framed stream.
IngestCounts ingest_syslog_stream(Engine& engine, std::istream& in, const std::optional<std::string>& instance_id,
                                  std::optional<int> default_year = std::nullopt);

// UDP and TCP syslog receivers feeding ingest_syslog_line.
class SyslogListener {
 public:
  explicit SyslogListener(Engine& engine);
  ~SyslogListener();

  SyslogListener(const SyslogListener&) = delete;
  SyslogListener& operator=(const SyslogListener&) = delete;

  // Bind before start(); port 0 picks a free port. Return the bound port.
  int bind_udp(const std::string& host, int port);
  int bind_tcp(const std::string& host, int port);
  void start();
  void stop();

  IngestCounts counts() const;

 private:
  void udp_loop();
  void tcp_loop();
  void serve_connection(int fd);
  void count(bool ok);

  Engine& engine_;
  int udp_fd_ = -1;
  int tcp_fd_ = -1;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> ingested_{0};
  std::atomic<std::uint64_t> dead_{0};
  std::vector<std::thread> threads_;
  std::mutex conn_mu_;
  std::vector<std::thread> connections_;
};

}  // namespace adr
