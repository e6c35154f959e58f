#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace adr {

struct HostPort {
  std::string host;
  int port = 0;
};

// "host:port", ":port" (all interfaces) or "port". Ports 0..65535.
HostPort parse_host_port(std::string_view text);

// One source of settings; unset fields fall through to the next source.
struct ConfigLayer {
  std::optional<std::string> store_dir;
  std::optional<std::string> http_addr;
  std::optional<std::string> syslog_udp;
  std::optional<std::string> syslog_tcp;
  std::optional<std::string> log_level;
  std::optional<std::vector<std::string>> definition_path;
};

using EnvLookup = std::function<const char*(const char*)>;

// ADR_STORE_DIR, ADR_HTTP_ADDR, ADR_SYSLOG_UDP, ADR_SYSLOG_TCP, ADR_LOG_LEVEL.
ConfigLayer layer_from_env(const EnvLookup& lookup);
// JSON object with the CliConfig field names. Unknown keys are rejected.
ConfigLayer layer_from_file(const std::filesystem::path& path);

struct CliConfig {
  std::string store_dir = "./adr-store";
  std::string http_addr = "127.0.0.1:8080";
  std::string syslog_udp;  // empty: listener disabled
  std::string syslog_tcp;
  std::string log_level = "info";
  std::vector<std::string> definition_path;
  // Field -> "flag", "env", "file" or "default".
  std::map<std::string, std::string> sources;

  nlohmann::json to_json() const;
};

// flags > env > file > defaults.
CliConfig resolve_config(const ConfigLayer& flags, const ConfigLayer& env, const ConfigLayer& file);

// Throws Error{kInvalidArgument} for bad addresses or log levels and
// Error{kStorageFailure} when the store directory cannot be created.
void check_config(const CliConfig& config);

}  // namespace adr
