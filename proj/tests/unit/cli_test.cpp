#include <gtest/gtest.h>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include <fstream>
#include <sstream>

#include "adr/simulator.hpp"
#include "commands.hpp"
#include "test_util.hpp"

namespace adr {
namespace {

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = adr::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string fx(const char* name) { return testing::fixture(name).string(); }

TEST(CliTest, ValidateExitCodes) {
  EXPECT_EQ(cli({"validate", fx("knowledge_base.json")}).code, cli::kOk);
  EXPECT_EQ(cli({"validate", fx("zero_denominator.json")}).code, cli::kFailed);
  EXPECT_EQ(cli({"validate", fx("malformed.json")}).code, cli::kUsage);
  EXPECT_EQ(cli({"validate", "/nonexistent/def.json"}).code, cli::kUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, cli::kUsage);
  EXPECT_EQ(cli({}).code, cli::kUsage);
}

TEST(CliTest, ValidateJson) {
  const CliResult ok = cli({"validate", fx("junior_hacker.json"), "--json"});
  EXPECT_TRUE(Json::parse(ok.out).at("errors").empty());
  const CliResult bad = cli({"validate", fx("malformed.json"), "--json"});
  EXPECT_EQ(Json::parse(bad.out).at("error").at("code"), "parse_error");
}

TEST(CliTest, Audit) {
  const CliResult r = cli({"audit", fx("junior_hacker.json"), "--json"});
  EXPECT_EQ(r.code, cli::kOk);
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j.at("reachability").at("phases").size(), 5u);
  EXPECT_EQ(cli({"audit", fx("zero_denominator.json")}).code, cli::kFailed);
}

TEST(CliTest, SimulateWritesReports) {
  testing::TempDir dir;
  const CliResult r = cli({"simulate", fx("knowledge_base.json"), fx("profiles.json"), "--n", "3", "--seed", "9",
                           "--exhaustive", "--out-dir", dir.path().string()});
  EXPECT_EQ(r.code, cli::kOk) << r.err;
  for (const char* f : {"reachability.json", "sankey.json", "students.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir.path() / f)) << f;
  }
  std::ifstream in(dir.path() / "sankey.json");
  EXPECT_EQ(Json::parse(in).at("schema"), "adr.export/v1");
  EXPECT_NE(r.out.find("conservation: ok"), std::string::npos);
  // Same seed, same bytes.
  const std::string out = dir.path().string();
  EXPECT_EQ(cli({"simulate", fx("knowledge_base.json"), fx("profiles.json"), "--n", "3", "--seed", "9", "--json",
                 "--out-dir", out})
                .out,
            cli({"simulate", fx("knowledge_base.json"), fx("profiles.json"), "--n", "3", "--seed", "9", "--json",
                 "--out-dir", out})
                .out);
}

TEST(CliTest, SimulateCapExceeded) {
  testing::TempDir dir;
  const CliResult r = cli({"simulate", fx("graph_mixed.json"), "--exhaustive", "--cap", "4", "--json"});
  EXPECT_EQ(r.code, cli::kFailed);
  EXPECT_EQ(Json::parse(r.out).at("error").at("code"), "cap_exceeded");
  EXPECT_EQ(cli({"simulate", fx("graph_mixed.json"), "--exhaustive", "--cap", "4", "--force-monte-carlo",
                 "--out-dir", dir.path().string()})
                .code,
            cli::kOk);
}

TEST(CliTest, IngestExportStatsAgainstAStore) {
  testing::TempDir dir;
  std::string inst;
  {
    testing::TestEngine te(dir.path());
    const TrainingDefinition def = testing::load_fixture("minimal.json");
    const InstanceInfo info = te->create_instance(def, 3);
    inst = info.id;
    const auto r = te->join(info.access_token, "u");
    te->submit_assessment(r.run_id, {});
    te->submit_answer(r.run_id, "flag");
    te->advance(r.run_id);
  }
  const CliResult ing = cli({"ingest", "--store-dir", dir.path().string(), inst, fx("commands.log")});
  EXPECT_EQ(ing.code, cli::kOk) << ing.err;
  EXPECT_EQ(ing.out, "4 ingested, 1 dead-lettered\n");

  const CliResult ex = cli({"export", "--store-dir", dir.path().string(), inst, "--format", "sankey"});
  EXPECT_EQ(ex.code, cli::kOk) << ex.err;
  EXPECT_EQ(Json::parse(ex.out).at("data").at("students"), 1);

  const CliResult st = cli({"stats", "--store-dir", dir.path().string(), inst, "--json"});
  EXPECT_EQ(st.code, cli::kOk) << st.err;
  EXPECT_EQ(Json::parse(st.out).at("actions").at("min"), 6);

  EXPECT_EQ(cli({"export", "--store-dir", dir.path().string(), "inst-404", "--format", "sankey"}).code, cli::kFailed);
  EXPECT_EQ(cli({"ingest", "--store-dir", dir.path().string(), inst, "/nonexistent.log"}).code, cli::kUsage);
  EXPECT_EQ(cli({"export", "--store-dir", dir.path().string(), inst, "--format", "pie"}).code, cli::kFailed);
}

TEST(CliTest, ServeRejectsBadConfig) {
  EXPECT_EQ(cli({"serve", "--http-addr", "nope:"}).code, cli::kFailed);
  EXPECT_EQ(cli({"serve", "--log-level", "loud"}).code, cli::kFailed);
  EXPECT_EQ(cli({"serve", "--config", "/nonexistent.json"}).code, cli::kUsage);
}

// The real binary: start, wait for the ready line, talk HTTP, stop on SIGTERM.
TEST(CliTest, ServeLifecycle) {
  testing::TempDir dir;
  int pipefd[2];
  ASSERT_EQ(::pipe(pipefd), 0);
  const std::string store = (dir.path() / "store").string();
  const std::string defs = testing::fixture("").string();
  const pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    ::dup2(pipefd[1], STDOUT_FILENO);
    ::close(pipefd[0]);
    ::setenv("ADR_LOG_LEVEL", "warn", 1);
    ::execl(ADR_BINARY, ADR_BINARY, "serve", "--store-dir", store.c_str(), "--http-addr", "127.0.0.1:0",
            "--syslog-udp", "127.0.0.1:0", "--definition-path", defs.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(pipefd[1]);
  std::string output;
  char buf[512];
  int port = 0;
  while (port == 0) {
    const ssize_t n = ::read(pipefd[0], buf, sizeof(buf));
    if (n <= 0) break;
    output.append(buf, static_cast<std::size_t>(n));
    const auto at = output.find("ready: ");
    const auto eol = at == std::string::npos ? at : output.find('\n', at);
    if (eol != std::string::npos) port = Json::parse(output.substr(at + 7, eol - at - 7)).at("http");
  }
  ASSERT_GT(port, 0) << output;
  EXPECT_NE(output.find("\"log_level\":\"warn\""), std::string::npos);
  EXPECT_NE(output.find("\"log_level\":\"env\""), std::string::npos);

  httplib::Client c("127.0.0.1", port);
  auto h = c.Get("/healthz");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  auto d = c.Get("/api/v1/definitions/knowledge-base");
  ASSERT_TRUE(d);
  EXPECT_EQ(d->status, 200);

  ::kill(pid, SIGTERM);
  while (true) {
    const ssize_t n = ::read(pipefd[0], buf, sizeof(buf));
    if (n <= 0) break;
    output.append(buf, static_cast<std::size_t>(n));
  }
  ::close(pipefd[0]);
  int status = 0;
  ::waitpid(pid, &status, 0);
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  EXPECT_NE(output.find("stopped"), std::string::npos);
}

}  // namespace
}  // namespace adr
