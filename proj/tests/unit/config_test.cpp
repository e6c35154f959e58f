#include <gtest/gtest.h>

#include <fstream>

#include "adr/config.hpp"
#include "adr/error.hpp"
#include "test_util.hpp"

namespace adr {
namespace {

TEST(ConfigTest, HostPort) {
  EXPECT_EQ(parse_host_port("127.0.0.1:8080").port, 8080);
  EXPECT_EQ(parse_host_port(":514").host, "0.0.0.0");
  EXPECT_EQ(parse_host_port("0").port, 0);
  EXPECT_EQ(parse_host_port("localhost:1").host, "localhost");
  for (const char* bad : {"", "host:", "host:99999", "host:12a", "a:b:c"}) {
    SCOPED_TRACE(bad);
    EXPECT_THROW(parse_host_port(bad), Error);
  }
}

TEST(ConfigTest, PrecedenceFlagsEnvFileDefaults) {
  ConfigLayer flags, env, file;
  flags.http_addr = "1.1.1.1:1";
  env.http_addr = "2.2.2.2:2";
  env.store_dir = "/env/store";
  file.store_dir = "/file/store";
  file.log_level = "debug";
  const CliConfig c = resolve_config(flags, env, file);
  EXPECT_EQ(c.http_addr, "1.1.1.1:1");
  EXPECT_EQ(c.store_dir, "/env/store");
  EXPECT_EQ(c.log_level, "debug");
  EXPECT_EQ(c.syslog_udp, "");
  EXPECT_EQ(c.sources.at("http_addr"), "flag");
  EXPECT_EQ(c.sources.at("store_dir"), "env");
  EXPECT_EQ(c.sources.at("log_level"), "file");
  EXPECT_EQ(c.sources.at("syslog_udp"), "default");
  EXPECT_EQ(c.to_json().at("sources").at("http_addr"), "flag");
}

TEST(ConfigTest, EnvLayer) {
  const std::map<std::string, std::string> vars = {{"ADR_STORE_DIR", "/s"}, {"ADR_LOG_LEVEL", "warn"}};
  const ConfigLayer l = layer_from_env([&](const char* k) -> const char* {
    auto it = vars.find(k);
    return it == vars.end() ? nullptr : it->second.c_str();
  });
  EXPECT_EQ(l.store_dir, "/s");
  EXPECT_EQ(l.log_level, "warn");
  EXPECT_FALSE(l.http_addr);
}

TEST(ConfigTest, FileLayer) {
  testing::TempDir dir;
  const auto path = dir.path() / "c.json";
  std::ofstream(path) << R"({"store_dir": "/x", "definition_path": ["a", "b"]})";
  const ConfigLayer l = layer_from_file(path);
  EXPECT_EQ(l.store_dir, "/x");
  EXPECT_EQ(l.definition_path, (std::vector<std::string>{"a", "b"}));

  std::ofstream(path) << R"({"stor_dir": "/x"})";
  EXPECT_THROW(layer_from_file(path), Error);
  std::ofstream(path) << "{";
  EXPECT_THROW(layer_from_file(path), Error);
  EXPECT_THROW(layer_from_file(dir.path() / "missing.json"), Error);
}

TEST(ConfigTest, CheckConfig) {
  testing::TempDir dir;
  CliConfig c;
  c.store_dir = (dir.path() / "nested" / "store").string();
  check_config(c);
  EXPECT_TRUE(std::filesystem::is_directory(c.store_dir));
  c.log_level = "loud";
  EXPECT_THROW(check_config(c), Error);
  c.log_level = "info";
  c.syslog_udp = "nope:";
  EXPECT_THROW(check_config(c), Error);
  c.syslog_udp = "";
  c.definition_path = {(dir.path() / "absent").string()};
  EXPECT_THROW(check_config(c), Error);
}

}  // namespace
}  // namespace adr
