#include <gtest/gtest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "adr/syslog.hpp"
#include "adr/syslog_listener.hpp"
#include "test_util.hpp"

namespace adr {
namespace {

using namespace std::chrono_literals;

std::string line_for(std::int64_t uid, const std::string& cmd) {
  return "Dec 1 2021 15:00:33 username=\"root\" client src=\"10.0.0.1\" cmd=\"" + cmd +
         "\" cmd_type=\"bash\" uid=\"" + std::to_string(uid) + "\" wd=\"/\"";
}

sockaddr_in loopback(int port) {
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(static_cast<std::uint16_t>(port));
  a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  return a;
}

bool wait_for(const std::function<bool()>& pred) {
  for (int i = 0; i < 200; ++i) {
    if (pred()) return true;
    std::this_thread::sleep_for(10ms);
  }
  return pred();
}

TEST(SyslogIngestTest, FixtureFile) {
  testing::TestEngine te;
  const InstanceInfo inst = te->create_instance(testing::load_fixture("minimal.json"), 1);
  std::ifstream in(testing::fixture("commands.log"));
  const IngestCounts c = ingest_syslog_stream(*te, in, inst.id);
  EXPECT_EQ(c.ingested, 4u);
  EXPECT_EQ(c.dead_lettered, 1u);
  EXPECT_EQ(te->store(inst.id).size(), 4u);
  ASSERT_EQ(te->store(inst.id).dead_letters().size(), 1u);
  EXPECT_EQ(te->store(inst.id).dead_letters()[0].raw, "this is not a syslog record");
}

TEST(SyslogIngestTest, RoutingBySandbox) {
  testing::TestEngine te;
  const InstanceInfo inst = te->create_instance(testing::load_fixture("minimal.json"), 1);
  const TrainingRun r = te->join(inst.access_token, "u");
  EXPECT_TRUE(ingest_syslog_line(*te, line_for(r.sandbox_uid, "ls"), std::nullopt));
  EXPECT_FALSE(ingest_syslog_line(*te, line_for(r.sandbox_uid + 100, "ls"), std::nullopt));
  EXPECT_FALSE(ingest_syslog_line(*te, "junk", std::nullopt));
  EXPECT_EQ(te->unbound_dead_letters().size(), 2u);
  EXPECT_EQ(te->store(inst.id).size(), 2u);  // TrainingStarted + the command
}

TEST(SyslogListenerTest, UdpAndTcp) {
  testing::TestEngine te;
  const InstanceInfo inst = te->create_instance(testing::load_fixture("minimal.json"), 1);
  const TrainingRun r = te->join(inst.access_token, "u");
  SyslogListener listener(*te);
  const int udp_port = listener.bind_udp("127.0.0.1", 0);
  const int tcp_port = listener.bind_tcp("127.0.0.1", 0);
  ASSERT_GT(udp_port, 0);
  ASSERT_GT(tcp_port, 0);
  listener.start();

  const int u = ::socket(AF_INET, SOCK_DGRAM, 0);
  auto ua = loopback(udp_port);
  for (const std::string& msg : {line_for(r.sandbox_uid, "whoami"), std::string("garbage")}) {
    ::sendto(u, msg.data(), msg.size(), 0, reinterpret_cast<sockaddr*>(&ua), sizeof(ua));
  }
  ::close(u);

  const int t = ::socket(AF_INET, SOCK_STREAM, 0);
  auto ta = loopback(tcp_port);
  ASSERT_EQ(::connect(t, reinterpret_cast<sockaddr*>(&ta), sizeof(ta)), 0);
  const std::string framed = line_for(r.sandbox_uid, "id") + "\n";
  const std::string counted = line_for(r.sandbox_uid, "pwd");
  const std::string stream = framed + std::to_string(counted.size()) + " " + counted;
  ASSERT_EQ(::send(t, stream.data(), stream.size(), 0), static_cast<ssize_t>(stream.size()));
  ::close(t);

  EXPECT_TRUE(wait_for([&] { return listener.counts().ingested + listener.counts().dead_lettered >= 4; }));
  listener.stop();
  EXPECT_EQ(listener.counts().ingested, 3u);
  EXPECT_EQ(listener.counts().dead_lettered, 1u);
  std::vector<std::string> cmds;
  for (const auto& e : te->query_events(r.run_id)) {
    if (e.is_command()) cmds.push_back(e.command().cmd);
  }
  std::sort(cmds.begin(), cmds.end());
  EXPECT_EQ(cmds, (std::vector<std::string>{"id", "pwd", "whoami"}));
}

}  // namespace
}  // namespace adr
