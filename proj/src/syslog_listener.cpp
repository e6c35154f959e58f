#include "adr/syslog_listener.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <spdlog/spdlog.h>

#include "adr/error.hpp"
#include "adr/syslog.hpp"

namespace adr {
namespace {

constexpr int kPollMs = 100;

int bind_socket(int type, const std::string& host, int port) {
  const int fd = ::socket(AF_INET, type | SOCK_CLOEXEC, 0);
  if (fd < 0) throw Error(ErrorCode::kStorageFailure, std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw Error(ErrorCode::kInvalidArgument, "invalid IPv4 address '" + host + "'");
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    throw Error(ErrorCode::kInvalidArgument, "cannot bind " + host + ":" + std::to_string(port) + ": " + why);
  }
  if (type == SOCK_STREAM && ::listen(fd, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    throw Error(ErrorCode::kInvalidArgument, "cannot listen on " + host + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return fd;
}

int bound_port(int fd) {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  return ntohs(addr.sin_port);
}

bool readable(int fd) {
  pollfd p{fd, POLLIN, 0};
  return ::poll(&p, 1, kPollMs) > 0 && (p.revents & (POLLIN | POLLHUP | POLLERR)) != 0;
}

void dead_letter_to(Engine& engine, const std::optional<std::string>& instance_id, DeadLetter letter) {
  if (instance_id) {
    engine.dead_letter(*instance_id, std::move(letter));
  } else {
    engine.dead_letter_unbound(std::move(letter));
  }
}

}  // namespace

bool ingest_syslog_line(Engine& engine, std::string_view line, const std::optional<std::string>& instance_id,
                        std::optional<int> default_year) {
  CommandEvent event;
  try {
    event = parse_syslog_command(line, default_year);
  } catch (const MalformedLine& e) {
    dead_letter_to(engine, instance_id, {std::string(line), e.reason(), e.offset()});
    return false;
  }
  if (instance_id) {
    engine.ingest_command(*instance_id, event);
    return true;
  }
  if (engine.route_command(event)) return true;
  engine.dead_letter_unbound(
      {std::string(line), "no run is bound to sandbox uid " + std::to_string(event.sandbox_uid), 0});
  return false;
}

IngestCounts ingest_syslog_stream(Engine& engine, std::istream& in, const std::optional<std::string>& instance_id,
                                  std::optional<int> default_year) {
  IngestCounts counts;
  SyslogFramer framer;
  auto take = [&](const std::string& frame) {
    if (ingest_syslog_line(engine, frame, instance_id, default_year)) {
      ++counts.ingested;
    } else {
      ++counts.dead_lettered;
    }
  };
  char buf[8192];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (const auto& frame : framer.feed(std::string_view(buf, static_cast<std::size_t>(in.gcount())))) take(frame);
  }
  if (auto rest = framer.finish()) take(*rest);
  return counts;
}

SyslogListener::SyslogListener(Engine& engine) : engine_(engine) {}

SyslogListener::~SyslogListener() {
  stop();
  if (udp_fd_ >= 0) ::close(udp_fd_);
  if (tcp_fd_ >= 0) ::close(tcp_fd_);
}

int SyslogListener::bind_udp(const std::string& host, int port) {
  udp_fd_ = bind_socket(SOCK_DGRAM, host, port);
  return bound_port(udp_fd_);
}

int SyslogListener::bind_tcp(const std::string& host, int port) {
  tcp_fd_ = bind_socket(SOCK_STREAM, host, port);
  return bound_port(tcp_fd_);
}

void SyslogListener::start() {
  running_ = true;
  if (udp_fd_ >= 0) threads_.emplace_back([this] { udp_loop(); });
  if (tcp_fd_ >= 0) threads_.emplace_back([this] { tcp_loop(); });
}

void SyslogListener::stop() {
  running_ = false;
  for (auto& t : threads_) {
    if (t.joinable()) t.join();
  }
  threads_.clear();
  std::lock_guard lock(conn_mu_);
  for (auto& t : connections_) {
    if (t.joinable()) t.join();
  }
  connections_.clear();
}

IngestCounts SyslogListener::counts() const { return {ingested_.load(), dead_.load()}; }

void SyslogListener::count(bool ok) { ok ? ++ingested_ : ++dead_; }

void SyslogListener::udp_loop() {
  std::vector<char> buf(64 * 1024);
  while (running_) {
    if (!readable(udp_fd_)) continue;
    const ssize_t n = ::recv(udp_fd_, buf.data(), buf.size(), 0);
    if (n <= 0) continue;
    // One datagram may still carry several LF-separated messages.
    SyslogFramer framer;
    auto frames = framer.feed(std::string_view(buf.data(), static_cast<std::size_t>(n)));
    if (auto rest = framer.finish()) frames.push_back(*rest);
    for (const auto& f : frames) {
      try {
        count(ingest_syslog_line(engine_, f, std::nullopt));
      } catch (const std::exception& e) {
        spdlog::error("syslog/udp: {}", e.what());
      }
    }
  }
}

void SyslogListener::tcp_loop() {
  while (running_) {
    if (!readable(tcp_fd_)) continue;
    const int fd = ::accept4(tcp_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    std::lock_guard lock(conn_mu_);
    connections_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void SyslogListener::serve_connection(int fd) {
  SyslogFramer framer;
  char buf[8192];
  auto take = [&](const std::string& f) {
    try {
      count(ingest_syslog_line(engine_, f, std::nullopt));
    } catch (const std::exception& e) {
      spdlog::error("syslog/tcp: {}", e.what());
    }
  };
  while (running_) {
    if (!readable(fd)) continue;
    const ssize_t n = ::recv(fd, buf, sizeof(buf), 0);
    if (n <= 0) break;
    for (const auto& f : framer.feed(std::string_view(buf, static_cast<std::size_t>(n)))) take(f);
  }
  if (auto rest = framer.finish()) take(*rest);
  ::close(fd);
}

}  // namespace adr
