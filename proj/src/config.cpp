#include "adr/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "adr/error.hpp"

namespace adr {
namespace {

const std::vector<std::string> kLogLevels = {"trace", "debug", "info", "warn", "error", "critical", "off"};

template <typename T>
void pick(const std::optional<T>& flag, const std::optional<T>& env, const std::optional<T>& file, T& out,
          std::string& source) {
  if (flag) {
    out = *flag;
    source = "flag";
  } else if (env) {
    out = *env;
    source = "env";
  } else if (file) {
    out = *file;
    source = "file";
  } else {
    source = "default";
  }
}

}  // namespace

HostPort parse_host_port(std::string_view text) {
  HostPort hp;
  std::string_view port_text = text;
  if (const auto colon = text.rfind(':'); colon != std::string_view::npos) {
    hp.host = std::string(text.substr(0, colon));
    port_text = text.substr(colon + 1);
  }
  if (hp.host.empty()) hp.host = "0.0.0.0";
  if (port_text.empty() || port_text.size() > 5 ||
      port_text.find_first_not_of("0123456789") != std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument, "invalid address '" + std::string(text) + "'", "expected host:port");
  }
  hp.port = std::stoi(std::string(port_text));
  if (hp.port > 65535) throw Error(ErrorCode::kInvalidArgument, "port out of range in '" + std::string(text) + "'");
  return hp;
}

ConfigLayer layer_from_env(const EnvLookup& lookup) {
  ConfigLayer l;
  auto get = [&](const char* name) -> std::optional<std::string> {
    const char* v = lookup(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
  };
  l.store_dir = get("ADR_STORE_DIR");
  l.http_addr = get("ADR_HTTP_ADDR");
  l.syslog_udp = get("ADR_SYSLOG_UDP");
  l.syslog_tcp = get("ADR_SYSLOG_TCP");
  l.log_level = get("ADR_LOG_LEVEL");
  return l;
}

ConfigLayer layer_from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kSchemaViolation, path.string() + ": config must be a JSON object");
  ConfigLayer l;
  for (const auto& [key, value] : j.items()) {
    if (key == "definition_path") {
      if (!value.is_array()) throw Error(ErrorCode::kSchemaViolation, "definition_path must be an array of strings");
      l.definition_path = value.get<std::vector<std::string>>();
      continue;
    }
    if (!value.is_string()) throw Error(ErrorCode::kSchemaViolation, "config key '" + key + "' must be a string");
    const std::string v = value.get<std::string>();
    if (key == "store_dir") {
      l.store_dir = v;
    } else if (key == "http_addr") {
      l.http_addr = v;
    } else if (key == "syslog_udp") {
      l.syslog_udp = v;
    } else if (key == "syslog_tcp") {
      l.syslog_tcp = v;
    } else if (key == "log_level") {
      l.log_level = v;
    } else {
      throw Error(ErrorCode::kSchemaViolation, "unknown config key '" + key + "'");
    }
  }
  return l;
}

CliConfig resolve_config(const ConfigLayer& flags, const ConfigLayer& env, const ConfigLayer& file) {
  CliConfig c;
  pick(flags.store_dir, env.store_dir, file.store_dir, c.store_dir, c.sources["store_dir"]);
  pick(flags.http_addr, env.http_addr, file.http_addr, c.http_addr, c.sources["http_addr"]);
  pick(flags.syslog_udp, env.syslog_udp, file.syslog_udp, c.syslog_udp, c.sources["syslog_udp"]);
  pick(flags.syslog_tcp, env.syslog_tcp, file.syslog_tcp, c.syslog_tcp, c.sources["syslog_tcp"]);
  pick(flags.log_level, env.log_level, file.log_level, c.log_level, c.sources["log_level"]);
  pick(flags.definition_path, env.definition_path, file.definition_path, c.definition_path,
       c.sources["definition_path"]);
  return c;
}

void check_config(const CliConfig& c) {
  parse_host_port(c.http_addr);
  if (!c.syslog_udp.empty()) parse_host_port(c.syslog_udp);
  if (!c.syslog_tcp.empty()) parse_host_port(c.syslog_tcp);
  if (std::find(kLogLevels.begin(), kLogLevels.end(), c.log_level) == kLogLevels.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown log level '" + c.log_level + "'");
  }
  std::error_code ec;
  std::filesystem::create_directories(c.store_dir, ec);
  if (ec || !std::filesystem::is_directory(c.store_dir)) {
    throw Error(ErrorCode::kStorageFailure, "store directory '" + c.store_dir + "' is not creatable");
  }
  for (const auto& d : c.definition_path) {
    if (!std::filesystem::is_directory(d)) {
      throw Error(ErrorCode::kInvalidArgument, "definition path entry '" + d + "' is not a directory");
    }
  }
}

nlohmann::json CliConfig::to_json() const {
  return {{"store_dir", store_dir},
          {"http_addr", http_addr},
          {"syslog_udp", syslog_udp},
          {"syslog_tcp", syslog_tcp},
          {"log_level", log_level},
          {"definition_path", definition_path},
          {"sources", sources}};
}

}  // namespace adr
