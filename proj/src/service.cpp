#include "adr/service.hpp"

#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "adr/analytics.hpp"
#include "adr/syslog_listener.hpp"

namespace adr {
namespace {

using httplib::Request;
using httplib::Response;

Json parse_body(const Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kParseError, "request body is not valid JSON", e.what());
  }
}

std::optional<TimestampMs> as_of_param(const Request& req) {
  if (!req.has_param("as_of_ms")) return std::nullopt;
  const std::string v = req.get_param_value("as_of_ms");
  try {
    std::size_t used = 0;
    const long long ms = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return TimestampMs{std::chrono::milliseconds{ms}};
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "as_of_ms must be an integer epoch in milliseconds");
  }
}

Json public_question(const Question& q) {
  Json j = {{"id", q.id}, {"text", q.text}, {"kind", std::string(to_string(q.kind))}};
  if (!q.choices.empty()) j["choices"] = q.choices;
  if (q.kind == QuestionKind::kSelfAssessment) j["scale_max"] = q.scale_max;
  return j;
}

std::string node_of(const TrainingRun& run) {
  switch (run.state) {
    case RunState::kIntro:
      return run.assessment_answers ? "A" : "Intro";
    case RunState::kInPhase:
      return task_node_id(run.phase, run.task);
    case RunState::kQuestionnaire:
      return "Q";
    case RunState::kFinished:
      return "End";
    case RunState::kAbandoned:
      return quit_node_id(run.phase);
  }
  return "Intro";
}

using Handler = std::function<Json(const Request&, int&)>;

httplib::Server::Handler wrap(Handler fn) {
  return [fn = std::move(fn)](const Request& req, Response& res) {
    int status = 200;
    Json out;
    try {
      out = fn(req, status);
    } catch (const Error& e) {
      status = http_status(e.code());
      out = error_body(e.code(), e.what(), e.detail());
    } catch (const Json::exception& e) {
      status = 400;
      out = error_body(ErrorCode::kSchemaViolation, "request body has the wrong shape", e.what());
    } catch (const std::exception& e) {
      spdlog::error("{} {}: {}", req.method, req.path, e.what());
      status = 500;
      out = {{"code", "internal"}, {"message", e.what()}, {"detail", ""}};
    }
    res.status = status;
    res.set_content(out.dump(-1, ' ', false, Json::error_handler_t::replace), "application/json");
  };
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParseError:
    case ErrorCode::kSchemaViolation:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kMalformedLine:
      return 400;
    case ErrorCode::kBadToken:
      return 403;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kWrongState:
    case ErrorCode::kDuplicateUser:
    case ErrorCode::kCapacityExhausted:
    case ErrorCode::kVersionConflict:
    case ErrorCode::kDecisionFailed:
    case ErrorCode::kEmpty:
      return 409;
    case ErrorCode::kInvalidDefinition:
    case ErrorCode::kCapExceeded:
    case ErrorCode::kUnsetMetric:
    case ErrorCode::kZeroDenominator:
      return 422;
    case ErrorCode::kOverlappingPhases:
    case ErrorCode::kStorageFailure:
      return 500;
  }
  return 500;
}

Json error_body(ErrorCode code, const std::string& message, const std::string& detail) {
  return {{"code", std::string(to_string(code))}, {"message", message}, {"detail", detail}};
}

Json current_view(const Engine& engine, const std::string& run_id) {
  const TrainingRun run = engine.run(run_id);
  const auto def = engine.definition_of(run.instance_id);
  Json v = {{"run_id", run.run_id}, {"state", std::string(to_string(run.state))}};
  if (run.parked) {
    v["node"] = "parked";
    v["message"] = "waiting for the instructor";
    return v;
  }
  switch (run.state) {
    case RunState::kIntro: {
      if (run.assessment_answers) {
        v["node"] = "pending";
        break;
      }
      v["node"] = "assessment";
      v["title"] = def->title;
      v["intro"] = def->intro;
      Json qs = Json::array();
      for (const auto& q : def->assessment.questions) qs.push_back(public_question(q));
      v["questions"] = qs;
      break;
    }
    case RunState::kInPhase: {
      const Phase& phase = def->phase(run.phase);
      const Task& task = phase.task(run.task);
      const RunPhaseRecord& rec = run.records.at(run.phase);
      v["node"] = "task";
      v["phase"] = run.phase;
      v["phase_count"] = def->phase_count();
      v["phase_title"] = phase.title;
      v["assignment"] = task.assignment;
      v["phase_completed"] = run.phase_completed;
      v["wrong_answers"] = rec.wrong_answer_count;
      v["solution_displayed"] = rec.solution_displayed;
      if (rec.solution_displayed) v["solution"] = task.solution;
      break;
    }
    case RunState::kQuestionnaire: {
      v["node"] = "questionnaire";
      Json qs = Json::array();
      for (const auto& q : def->questionnaire) qs.push_back(public_question(q));
      v["questions"] = qs;
      break;
    }
    case RunState::kFinished: {
      v["node"] = "finished";
      Json grid = Json::array();
      for (const auto& phase : def->phases) {
        Json tasks = Json::array();
        for (int y = 1; y <= phase.task_count(); ++y) {
          tasks.push_back({{"task", y}, {"assignment", phase.task(y).assignment}});
        }
        grid.push_back({{"phase", phase.index}, {"title", phase.title}, {"tasks", tasks}});
      }
      Json path = Json::array();
      for (const auto& a : run.assignments) path.push_back({{"phase", a.phase}, {"task", a.task}});
      v["grid"] = grid;
      v["path"] = path;
      break;
    }
    case RunState::kAbandoned:
      v["node"] = "abandoned";
      break;
  }
  return v;
}

struct HttpService::Impl {
  explicit Impl(Engine& e) : engine(e) {}

  Engine& engine;
  httplib::Server server;
  std::thread thread;
  std::atomic<bool> ready{false};
};

HttpService::HttpService(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {
  Engine& eng = engine;
  httplib::Server& s = impl_->server;
  Impl* impl = impl_.get();

  s.Get("/healthz", [impl](const Request&, Response& res) {
    const bool ok = impl->ready.load();
    res.status = ok ? 200 : 503;
    res.set_content(Json{{"status", ok ? "ok" : "starting"}}.dump(), "application/json");
  });

  // Definitions.
  s.Post("/api/v1/definitions/validate", wrap([](const Request& req, int&) {
           return validate_definition(parse_definition(req.body)).to_json();
         }));
  s.Post("/api/v1/definitions", wrap([&eng](const Request& req, int& status) {
           const TrainingDefinition def = parse_definition(req.body);
           const ValidationReport report = validate_definition(def);
           if (!report.ok()) {
             throw Error(ErrorCode::kInvalidDefinition, "definition has validation errors", report.to_json().dump());
           }
           eng.register_definition(def);
           status = 201;
           return Json{{"id", def.id}, {"version", def.version}, {"validation", report.to_json()}};
         }));
  s.Get(R"(/api/v1/definitions/([^/]+))", wrap([&eng](const Request& req, int&) {
          auto def = eng.find_definition(req.matches[1]);
          if (!def) throw Error(ErrorCode::kNotFound, "unknown definition '" + std::string(req.matches[1]) + "'");
          return to_json(*def);
        }));

  // Instances.
  s.Post("/api/v1/instances", wrap([&eng](const Request& req, int& status) {
           const Json body = parse_body(req);
           const int capacity = body.value("capacity", 0);
           InstanceInfo info;
           if (auto d = body.find("definition"); d != body.end()) {
             info = eng.create_instance(definition_from_json(*d), capacity);
           } else {
             const std::string id = body.value("definition_id", "");
             if (id.empty()) throw Error(ErrorCode::kInvalidArgument, "definition_id or definition is required");
             info = eng.create_instance(id, capacity);
           }
           status = 201;
           return to_json(info, true);
         }));
  s.Get("/api/v1/instances", wrap([&eng](const Request&, int&) {
          Json out = Json::array();
          for (const auto& i : eng.instances()) out.push_back(to_json(i));
          return out;
        }));
  s.Get(R"(/api/v1/instances/([^/]+))", wrap([&eng](const Request& req, int&) {
          return to_json(eng.instance(req.matches[1]));
        }));
  s.Post(R"(/api/v1/instances/([^/]+)/close)", wrap([&eng](const Request& req, int&) {
           eng.close_instance(req.matches[1]);
           return to_json(eng.instance(req.matches[1]));
         }));
  s.Get(R"(/api/v1/instances/([^/]+)/runs)", wrap([&eng](const Request& req, int&) {
          Json out = Json::array();
          for (const auto& r : eng.runs(req.matches[1])) {
            Json j = to_json(r);
            j["node"] = node_of(r);
            out.push_back(std::move(j));
          }
          return out;
        }));
  s.Get(R"(/api/v1/instances/([^/]+)/alerts)", wrap([&eng](const Request& req, int&) {
          Json out = Json::array();
          for (const auto& a : eng.alerts(req.matches[1])) out.push_back(to_json(a));
          return out;
        }));
  s.Get(R"(/api/v1/instances/([^/]+)/sankey)", wrap([&eng](const Request& req, int&) {
          return export_visualization(eng, req.matches[1], "sankey", as_of_param(req));
        }));
  s.Get(R"(/api/v1/instances/([^/]+)/stats)", wrap([&eng](const Request& req, int&) {
          return export_visualization(eng, req.matches[1], "stats");
        }));
  s.Get(R"(/api/v1/instances/([^/]+)/export)", wrap([&eng](const Request& req, int&) {
          if (!req.has_param("format")) throw Error(ErrorCode::kInvalidArgument, "format parameter is required");
          return export_visualization(eng, req.matches[1], req.get_param_value("format"), as_of_param(req));
        }));

  // Runs.
  s.Post("/api/v1/runs", wrap([&eng](const Request& req, int& status) {
           const Json body = parse_body(req);
           const TrainingRun run = eng.join(body.value("token", ""), body.value("user_ref", ""));
           status = 201;
           return Json{{"run_id", run.run_id},
                       {"user_ref", run.user_ref},
                       {"sandbox_uid", run.sandbox_uid},
                       {"state", std::string(to_string(run.state))}};
         }));
  s.Get(R"(/api/v1/runs/([^/]+))", wrap([&eng](const Request& req, int&) {
          const TrainingRun run = eng.run(req.matches[1]);
          Json j = to_json(run);
          j["node"] = node_of(run);
          return j;
        }));
  s.Get(R"(/api/v1/runs/([^/]+)/current)", wrap([&eng](const Request& req, int&) {
          return current_view(eng, req.matches[1]);
        }));
  s.Get(R"(/api/v1/runs/([^/]+)/path)", wrap([&eng](const Request& req, int&) {
          return Json{{"schema", kExportSchema}, {"format", "path"}, {"data", to_json(student_path(eng, req.matches[1]))}};
        }));
  s.Post(R"(/api/v1/runs/([^/]+)/assessment)", wrap([&eng](const Request& req, int&) {
           const Json body = parse_body(req);
           const std::string id = req.matches[1];
           eng.submit_assessment(id, answers_from_json(body.value("answers", Json::object())));
           return Json{{"current", current_view(eng, id)}};
         }));
  s.Post(R"(/api/v1/runs/([^/]+)/answer)", wrap([&eng](const Request& req, int&) {
           const Json body = parse_body(req);
           const std::string id = req.matches[1];
           const Verdict v = eng.submit_answer(id, body.value("answer", ""));
           return Json{{"verdict", v == Verdict::kCorrect ? "correct" : "wrong"}, {"current", current_view(eng, id)}};
         }));
  s.Post(R"(/api/v1/runs/([^/]+)/solution)", wrap([&eng](const Request& req, int&) {
           return Json{{"solution", eng.reveal_solution(req.matches[1])}};
         }));
  s.Post(R"(/api/v1/runs/([^/]+)/advance)", wrap([&eng](const Request& req, int&) {
           const std::string id = req.matches[1];
           const AdvanceResult r = eng.advance(id);
           const char* kind = r.kind == AdvanceResult::Kind::kAssignment      ? "assignment"
                              : r.kind == AdvanceResult::Kind::kQuestionnaire ? "questionnaire"
                                                                              : "finished";
           return Json{{"result", kind}, {"current", current_view(eng, id)}};
         }));
  s.Post(R"(/api/v1/runs/([^/]+)/questionnaire)", wrap([&eng](const Request& req, int&) {
           const Json body = parse_body(req);
           const std::string id = req.matches[1];
           eng.submit_questionnaire(id, body.value("answers", Json::object()));
           return Json{{"current", current_view(eng, id)}};
         }));
  s.Post(R"(/api/v1/runs/([^/]+)/assign)", wrap([&eng](const Request& req, int&) {
           const Json body = parse_body(req);
           return to_json(eng.assign_manually(req.matches[1], body.at("task").get<int>()));
         }));

  // Telemetry intake.
  s.Post("/api/v1/events/actions", wrap([&eng](const Request& req, int& status) {
           const Json body = parse_body(req);
           const Json items = body.is_array() ? body : Json::array({body});
           Json seqs = Json::array();
           for (const auto& item : items) {
             std::optional<std::string> dedup;
             if (item.contains("dedup_key")) dedup = item["dedup_key"].get<std::string>();
             seqs.push_back(eng.ingest_external_action(action_from_json(item), dedup));
           }
           status = 202;
           return Json{{"seqs", seqs}};
         }));
  s.Post("/api/v1/events/commands", wrap([&eng](const Request& req, int& status) {
           const Json body = parse_body(req);
           IngestCounts counts;
           for (const auto& line : body.value("lines", Json::array())) {
             ingest_syslog_line(eng, line.get<std::string>(), std::nullopt) ? ++counts.ingested
                                                                            : ++counts.dead_lettered;
           }
           for (const auto& record : body.value("records", Json::array())) {
             if (eng.route_command(command_from_json(record))) {
               ++counts.ingested;
             } else {
               eng.dead_letter_unbound({record.dump(), "no run is bound to this sandbox uid", 0});
               ++counts.dead_lettered;
             }
           }
           status = 202;
           return Json{{"ingested", counts.ingested}, {"dead_lettered", counts.dead_lettered}};
         }));
}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kInvalidArgument, "cannot bind " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) {
    throw Error(ErrorCode::kInvalidArgument, "cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
  }
  return port;
}

void HttpService::start() {
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpService::stop() {
  impl_->ready = false;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void HttpService::set_ready(bool ready) { impl_->ready = ready; }

}  // namespace adr
