#include "commands.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "adr/analytics.hpp"
#include "adr/config.hpp"
#include "adr/error.hpp"
#include "adr/model.hpp"
#include "adr/runtime.hpp"
#include "adr/service.hpp"
#include "adr/simulator.hpp"
#include "adr/syslog_listener.hpp"

namespace adr::cli {
namespace {

// Thrown for conditions that map to exit code 2.
struct UsageFailure {
  ErrorCode code;
  std::string message;
};

void require_file(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw UsageFailure{ErrorCode::kNotFound, "no such file: " + path};
}

TrainingDefinition load_definition(const std::string& path) {
  require_file(path);
  try {
    return load_definition_file(path);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kParseError || e.code() == ErrorCode::kSchemaViolation ||
        e.code() == ErrorCode::kNotFound) {
      throw UsageFailure{e.code(), e.what()};
    }
    throw;
  }
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kStorageFailure, "cannot write " + path.string());
  f << content;
}

std::string describe_line(const char* label, const Describe& d) {
  std::ostringstream out;
  out << label << ": n=" << d.count << " min=" << d.min << " max=" << d.max << " mean=" << d.mean_rounded
      << " median=" << (d.median_den == 1 ? std::to_string(d.median_num)
                                          : std::to_string(d.median_num) + "/" + std::to_string(d.median_den))
      << " total=" << d.total;
  return out.str();
}

std::unique_ptr<Engine> open_store(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) throw UsageFailure{ErrorCode::kNotFound, "no such store directory: " + dir};
  EngineOptions o;
  o.store_dir = dir;
  o.sync_each_append = true;
  return std::make_unique<Engine>(o);
}

int cmd_validate(const std::string& file, bool json, std::ostream& out) {
  const TrainingDefinition def = load_definition(file);
  const ValidationReport report = validate_definition(def);
  if (json) {
    out << report.to_json().dump(2) << "\n";
  } else {
    out << report.to_text();
    if (report.ok()) out << file << ": ok\n";
  }
  return report.ok() ? kOk : kFailed;
}

int cmd_audit(const std::string& file, int cap, bool json, std::ostream& out) {
  const TrainingDefinition def = load_definition(file);
  const AuditReport report = audit_weights(def, cap);
  out << (json ? report.to_json().dump(2) + "\n" : report.to_text());
  return report.validation.ok() ? kOk : kFailed;
}

struct SimulateArgs {
  std::string definition;
  std::string profiles;
  int n = 10;
  std::uint64_t seed = 0;
  bool exhaustive = false;
  bool force_monte_carlo = false;
  std::uint64_t samples = 100000;
  int cap = kDefaultBitCap;
  std::string out_dir = ".";
  bool json = false;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const TrainingDefinition def = load_definition(a.definition);
  const ValidationReport validation = validate_definition(def);
  if (!validation.ok()) {
    out << validation.to_text();
    return kFailed;
  }
  std::vector<StudentProfile> profiles;
  if (!a.profiles.empty()) {
    require_file(a.profiles);
    try {
      profiles = load_profiles_file(a.profiles, def);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kParseError) throw UsageFailure{e.code(), e.what()};
      throw;
    }
  } else {
    StudentProfile perfect;
    perfect.name = "perfect";
    profiles.push_back(perfect);
  }

  Json summary = Json::object();
  if (a.exhaustive) {
    ReachabilityReport reach;
    try {
      reach = enumerate_paths(def, a.cap);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kCapExceeded || !a.force_monte_carlo) throw;
      reach = sample_paths(def, a.samples, a.seed);
    }
    write_file(std::filesystem::path(a.out_dir) / "reachability.json", to_json(reach).dump(2) + "\n");
    if (!a.json) out << to_text(reach);
    summary["reachability"] = to_json(reach);
  }

  CohortOptions options;
  options.n_per_profile = a.n;
  options.seed = a.seed;
  const CohortResult cohort = simulate_cohort(def, profiles, options);
  const Json sankey_doc = {{"schema", kExportSchema}, {"format", "sankey"}, {"seed", a.seed}, {"data", to_json(cohort.flow)}};
  write_file(std::filesystem::path(a.out_dir) / "sankey.json", sankey_doc.dump(2) + "\n");
  Json students = Json::array();
  for (const auto& s : cohort.students) {
    students.push_back({{"profile", s.profile}, {"run_id", s.run_id}, {"tasks", s.tasks}, {"terminal", s.terminal}});
  }
  write_file(std::filesystem::path(a.out_dir) / "students.json", students.dump(2) + "\n");
  const auto violations = check_conservation(cohort.flow);
  if (a.json) {
    summary["sankey"] = sankey_doc;
    summary["students"] = students;
    summary["conservation_violations"] = violations;
    out << summary.dump(2) << "\n";
  } else {
    out << "simulated " << cohort.students.size() << " student(s), seed " << a.seed << "\n";
    for (const auto& l : cohort.flow.links) out << "  " << l.from << " -> " << l.to << ": " << l.count << "\n";
    out << "conservation: " << (violations.empty() ? "ok" : std::to_string(violations.size()) + " violation(s)")
        << "\n";
  }
  return violations.empty() ? kOk : kFailed;
}

struct ServeArgs {
  std::string config_file;
  ConfigLayer flags;
};

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  ConfigLayer file;
  if (!a.config_file.empty()) {
    require_file(a.config_file);
    try {
      file = layer_from_file(a.config_file);
    } catch (const Error& e) {
      throw UsageFailure{e.code(), e.what()};
    }
  }
  const CliConfig config = resolve_config(a.flags, layer_from_env([](const char* n) { return std::getenv(n); }), file);
  check_config(config);
  spdlog::set_level(spdlog::level::from_str(config.log_level));
  out << "effective config: " << config.to_json().dump() << std::endl;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  EngineOptions eo;
  eo.store_dir = config.store_dir;
  eo.sync_each_append = true;
  Engine engine(eo);
  for (const auto& dir : config.definition_path) {
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.path().extension() != ".json") continue;
      try {
        const TrainingDefinition def = load_definition_file(entry.path());
        if (validate_definition(def).ok()) {
          engine.register_definition(def);
          spdlog::info("registered definition {} v{} from {}", def.id, def.version, entry.path().string());
        } else {
          spdlog::warn("skipping invalid definition {}", entry.path().string());
        }
      } catch (const Error& e) {
        spdlog::warn("skipping {}: {}", entry.path().string(), e.what());
      }
    }
  }

  HttpService http(engine);
  const HostPort hp = parse_host_port(config.http_addr);
  const int http_port = http.bind(hp.host, hp.port);
  SyslogListener syslog(engine);
  Json ports = {{"http", http_port}};
  if (!config.syslog_udp.empty()) {
    const HostPort u = parse_host_port(config.syslog_udp);
    ports["syslog_udp"] = syslog.bind_udp(u.host, u.port);
  }
  if (!config.syslog_tcp.empty()) {
    const HostPort t = parse_host_port(config.syslog_tcp);
    ports["syslog_tcp"] = syslog.bind_tcp(t.host, t.port);
  }
  syslog.start();
  http.start();
  http.set_ready(true);
  out << "ready: " << ports.dump() << std::endl;
  spdlog::info("serving on {}", ports.dump());

  int sig = 0;
  sigwait(&signals, &sig);
  spdlog::info("signal {}: shutting down", sig);
  http.stop();
  syslog.stop();
  out << "stopped" << std::endl;
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive training engine"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string file;
  bool json = false;
  int cap = kDefaultBitCap;

  auto* validate = app.add_subcommand("validate", "Validate a training definition");
  validate->add_option("definition", file, "Definition file")->required();
  validate->add_flag("--json", json, "Machine-readable output");

  auto* audit = app.add_subcommand("audit", "Audit decision-matrix weights");
  audit->add_option("definition", file, "Definition file")->required();
  audit->add_option("--cap", cap, "Exhaustive bit cap per phase");
  audit->add_flag("--json", json, "Machine-readable output");

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Simulate a cohort and report reachability");
  simulate->add_option("definition", sim.definition, "Definition file")->required();
  simulate->add_option("profiles", sim.profiles, "Profiles file");
  simulate->add_option("--n", sim.n, "Students per profile")->check(CLI::NonNegativeNumber);
  simulate->add_option("--seed", sim.seed, "Random seed");
  simulate->add_flag("--exhaustive", sim.exhaustive, "Enumerate all metric-bit assignments");
  simulate->add_flag("--force-monte-carlo", sim.force_monte_carlo, "Sample when the bit cap is exceeded");
  simulate->add_option("--samples", sim.samples, "Monte-Carlo samples per phase");
  simulate->add_option("--cap", sim.cap, "Exhaustive bit cap per phase");
  simulate->add_option("--out-dir", sim.out_dir, "Directory for report files");
  simulate->add_flag("--json", sim.json, "Machine-readable output");

  ServeArgs serve_args;
  std::string store_dir, http_addr, syslog_udp, syslog_tcp, log_level;
  std::vector<std::string> definition_path;
  auto* serve = app.add_subcommand("serve", "Run the HTTP and syslog service");
  serve->add_option("--config", serve_args.config_file, "JSON config file");
  serve->add_option("--store-dir", store_dir, "Event store directory");
  serve->add_option("--http-addr", http_addr, "HTTP bind address host:port");
  serve->add_option("--syslog-udp", syslog_udp, "Syslog UDP bind address");
  serve->add_option("--syslog-tcp", syslog_tcp, "Syslog TCP bind address");
  serve->add_option("--log-level", log_level, "trace|debug|info|warn|error|critical|off");
  serve->add_option("--definition-path", definition_path, "Directories with definition files");

  std::string instance_id;
  std::optional<int> year;
  auto* ingest = app.add_subcommand("ingest", "Ingest a file of syslog command lines");
  ingest->add_option("--store-dir", store_dir, "Event store directory")->required();
  ingest->add_option("instance", instance_id, "Instance id")->required();
  ingest->add_option("file", file, "Syslog file")->required();
  ingest->add_option("--year", year, "Year for timestamps without one");
  ingest->add_flag("--json", json, "Machine-readable output");

  std::string format = "sankey", out_file;
  std::optional<std::int64_t> as_of_ms;
  auto* exp = app.add_subcommand("export", "Export analytics of an instance");
  exp->add_option("--store-dir", store_dir, "Event store directory")->required();
  exp->add_option("instance", instance_id, "Instance id")->required();
  exp->add_option("--format", format, "sankey|paths|stats");
  exp->add_option("--as-of-ms", as_of_ms, "Replay up to this epoch millisecond");
  exp->add_option("--out", out_file, "Write to a file instead of stdout");

  std::vector<std::string> instance_ids;
  auto* stats = app.add_subcommand("stats", "Descriptive statistics of actions and commands");
  stats->add_option("--store-dir", store_dir, "Event store directory")->required();
  stats->add_option("instances", instance_ids, "Instance ids")->required();
  stats->add_flag("--json", json, "Machine-readable output");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  auto fail = [&](ErrorCode code, const std::string& message, const std::string& detail, int exit_code) {
    if (json || sim.json) {
      out << Json{{"error", error_body(code, message, detail)}}.dump(2) << "\n";
    } else {
      err << "error [" << to_string(code) << "]: " << message << (detail.empty() ? "" : " (" + detail + ")") << "\n";
    }
    return exit_code;
  };

  try {
    if (*validate) return cmd_validate(file, json, out);
    if (*audit) return cmd_audit(file, cap, json, out);
    if (*simulate) return cmd_simulate(sim, out);
    if (*serve) {
      auto opt = [](const std::string& v) { return v.empty() ? std::nullopt : std::optional<std::string>(v); };
      serve_args.flags.store_dir = opt(store_dir);
      serve_args.flags.http_addr = opt(http_addr);
      serve_args.flags.syslog_udp = opt(syslog_udp);
      serve_args.flags.syslog_tcp = opt(syslog_tcp);
      serve_args.flags.log_level = opt(log_level);
      if (!definition_path.empty()) serve_args.flags.definition_path = definition_path;
      return cmd_serve(serve_args, out);
    }
    if (*ingest) {
      require_file(file);
      auto engine = open_store(store_dir);
      engine->instance(instance_id);
      std::ifstream in(file, std::ios::binary);
      const IngestCounts c = ingest_syslog_stream(*engine, in, instance_id, year);
      if (json) {
        out << Json{{"ingested", c.ingested}, {"dead_lettered", c.dead_lettered}}.dump(2) << "\n";
      } else {
        out << c.ingested << " ingested, " << c.dead_lettered << " dead-lettered\n";
      }
      return kOk;
    }
    if (*exp) {
      auto engine = open_store(store_dir);
      std::optional<TimestampMs> as_of;
      if (as_of_ms) as_of = TimestampMs{std::chrono::milliseconds{*as_of_ms}};
      const std::string doc = export_visualization(*engine, instance_id, format, as_of).dump(2) + "\n";
      if (out_file.empty()) {
        out << doc;
      } else {
        write_file(out_file, doc);
      }
      return kOk;
    }
    if (*stats) {
      auto engine = open_store(store_dir);
      const RunStats s = summary_stats(*engine, instance_ids);
      if (json) {
        out << to_json(s).dump(2) << "\n";
      } else {
        out << "students: " << s.students.size() << "\n"
            << describe_line("actions", s.actions) << "\n"
            << describe_line("commands", s.commands) << "\n";
      }
      return kOk;
    }
  } catch (const UsageFailure& f) {
    return fail(f.code, f.message, "", kUsage);
  } catch (const Error& e) {
    return fail(e.code(), e.what(), e.detail(), kFailed);
  } catch (const std::exception& e) {
    return fail(ErrorCode::kStorageFailure, e.what(), "", kFailed);
  }
  return kUsage;
}

}  // namespace adr::cli
