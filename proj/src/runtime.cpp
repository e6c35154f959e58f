#include "adr/runtime.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "adr/error.hpp"

namespace adr {
namespace {

constexpr const char* kRegistryFile = "instances.jsonl";
constexpr const char* kUnboundFile = "unbound.jsonl";

std::int64_t ms_of(TimestampMs t) { return t.time_since_epoch().count(); }
TimestampMs ms_at(std::int64_t v) { return TimestampMs{std::chrono::milliseconds{v}}; }

std::string random_token() {
  std::random_device rd;
  std::ostringstream out;
  for (int i = 0; i < 4; ++i) {
    char buf[9];
    std::snprintf(buf, sizeof(buf), "%08x", static_cast<unsigned>(rd()));
    out << buf;
  }
  return out.str();
}

// Trailing digits of an id ("inst-12" -> 12, "7" -> 7); 0 when absent.
std::uint64_t id_number(const std::string& id) {
  std::size_t i = id.size();
  while (i > 0 && std::isdigit(static_cast<unsigned char>(id[i - 1]))) --i;
  if (i == id.size()) return 0;
  return std::stoull(id.substr(i));
}

void append_line(const std::filesystem::path& path, const std::string& line, bool sync) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorCode::kStorageFailure, "cannot open " + path.string() + ": " + std::strerror(errno));
  const ssize_t n = ::write(fd, line.data(), line.size());
  const bool ok = n == static_cast<ssize_t>(line.size());
  if (ok && sync) ::fsync(fd);
  ::close(fd);
  if (!ok) throw Error(ErrorCode::kStorageFailure, "short write to " + path.string());
}

Json finalized_of(const Json& details) {
  auto it = details.find("finalized");
  return it == details.end() ? Json() : *it;
}

}  // namespace

std::string_view to_string(RunState state) {
  switch (state) {
    case RunState::kIntro:
      return "intro";
    case RunState::kInPhase:
      return "in_phase";
    case RunState::kQuestionnaire:
      return "questionnaire";
    case RunState::kFinished:
      return "finished";
    case RunState::kAbandoned:
      return "abandoned";
  }
  return "unknown";
}

Json to_json(const InstanceInfo& info, bool with_token) {
  Json j = {{"id", info.id},
            {"definition_id", info.definition_id},
            {"definition_version", info.definition_version},
            {"capacity", info.capacity},
            {"open", info.open},
            {"created_at_ms", ms_of(info.created_at)}};
  if (info.closed_at) j["closed_at_ms"] = ms_of(*info.closed_at);
  if (with_token) j["access_token"] = info.access_token;
  return j;
}

Json to_json(const TaskAssignment& a) {
  Json j = {{"phase", a.phase}, {"task", a.task}};
  if (a.performance) j["performance"] = a.performance->to_string();
  Json rows = Json::array();
  for (const auto& r : a.explanation) {
    rows.push_back({{"row", r.row}, {"earned", r.earned}, {"possible", r.possible}, {"solution_gated", r.solution_gated}});
  }
  if (!rows.empty()) j["explanation"] = rows;
  return j;
}

Json to_json(const TrainingRun& run) {
  Json j = {{"run_id", run.run_id},
            {"instance_id", run.instance_id},
            {"user_ref", run.user_ref},
            {"sandbox_uid", run.sandbox_uid},
            {"state", std::string(to_string(run.state))},
            {"phase", run.phase},
            {"task", run.task},
            {"phase_completed", run.phase_completed},
            {"parked", run.parked},
            {"started_at_ms", ms_of(run.started_at)},
            {"action_count", run.action_count}};
  if (run.parked) j["park_reason"] = run.park_reason;
  Json assignments = Json::array();
  for (const auto& a : run.assignments) {
    Json e = {{"phase", a.phase}, {"task", a.task}};
    if (a.performance) e["performance"] = a.performance->to_string();
    if (a.manual) e["manual"] = true;
    assignments.push_back(std::move(e));
  }
  j["assignments"] = std::move(assignments);
  return j;
}

Json to_json(const Alert& a) {
  return {{"run_id", a.run_id}, {"user_ref", a.user_ref}, {"phase", a.phase}, {"kind", a.kind}, {"message", a.message}};
}

struct Engine::RunSlot {
  std::mutex mu;
  TrainingRun run;
};

struct Engine::Instance {
  Instance(InstanceInfo i, std::shared_ptr<const TrainingDefinition> d, std::unique_ptr<EventStore> s)
      : info(std::move(i)), def(std::move(d)), store(std::move(s)), sankey(*def) {}

  InstanceInfo info;
  std::shared_ptr<const TrainingDefinition> def;
  std::unique_ptr<EventStore> store;
  // Guards info, runs, users and sankey. Taken after a run's own mutex.
  mutable std::mutex mu;
  std::map<std::string, std::shared_ptr<RunSlot>> runs;
  std::map<std::string, std::string> users;  // user_ref -> run id
  SankeyBuilder sankey;
};

Engine::Engine(EngineOptions options) : options_(std::move(options)) {
  clock_ = options_.clock ? options_.clock : std::make_shared<SystemClock>();
  if (!options_.store_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(options_.store_dir, ec);
    if (ec) throw Error(ErrorCode::kStorageFailure, "cannot create store directory " + options_.store_dir.string());
    unbound_ = std::make_unique<EventStore>(options_.store_dir / kUnboundFile, options_.sync_each_append);
    recover();
  } else {
    unbound_ = std::make_unique<EventStore>();
  }
}

Engine::~Engine() = default;

std::string Engine::new_token() { return options_.token_source ? options_.token_source() : random_token(); }

void Engine::append_registry(const Json& line) {
  if (options_.store_dir.empty()) return;
  append_line(options_.store_dir / kRegistryFile, line.dump() + "\n", options_.sync_each_append);
}

void Engine::register_definition(const TrainingDefinition& def) {
  if (def.id.empty()) throw Error(ErrorCode::kInvalidArgument, "definition has no id");
  std::unique_lock lock(mu_);
  if (auto it = definitions_.find(def.id); it != definitions_.end()) {
    if (it->second == def) return;
    if (def.version <= it->second.version) {
      throw Error(ErrorCode::kVersionConflict,
                  "definition '" + def.id + "' is at version " + std::to_string(it->second.version),
                  "save with version " + std::to_string(it->second.version + 1));
    }
  }
  append_registry({{"type", "definition"}, {"definition", to_json(def)}});
  definitions_[def.id] = def;
}

std::optional<TrainingDefinition> Engine::find_definition(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = definitions_.find(id);
  if (it == definitions_.end()) return std::nullopt;
  return it->second;
}

std::shared_ptr<Engine::Instance> Engine::make_instance(InstanceInfo info,
                                                         std::shared_ptr<const TrainingDefinition> def) {
  std::unique_ptr<EventStore> store;
  if (options_.store_dir.empty()) {
    store = std::make_unique<EventStore>();
  } else {
    store = std::make_unique<EventStore>(options_.store_dir / (info.id + ".jsonl"), options_.sync_each_append);
  }
  return std::make_shared<Instance>(std::move(info), std::move(def), std::move(store));
}

InstanceInfo Engine::create_instance(const std::string& definition_id, int capacity) {
  auto def = find_definition(definition_id);
  if (!def) throw Error(ErrorCode::kNotFound, "unknown definition '" + definition_id + "'");
  return create_instance(*def, capacity);
}

InstanceInfo Engine::create_instance(const TrainingDefinition& def, int capacity) {
  if (capacity < 1) throw Error(ErrorCode::kInvalidArgument, "capacity must be at least 1");
  if (options_.validate_definitions) {
    const ValidationReport report = validate_definition(def);
    if (!report.ok()) {
      throw Error(ErrorCode::kInvalidDefinition, "definition '" + def.id + "' has validation errors",
                  report.to_json().dump());
    }
  }
  std::unique_lock lock(mu_);
  InstanceInfo info;
  info.id = "inst-" + std::to_string(next_instance_);
  info.definition_id = def.id;
  info.definition_version = def.version;
  info.capacity = capacity;
  info.created_at = clock_->now();
  do {
    info.access_token = new_token();
  } while (tokens_.count(info.access_token));
  append_registry({{"type", "created"},
                   {"instance", to_json(info, true)},
                   {"definition", to_json(def)}});
  ++next_instance_;
  auto inst = make_instance(info, std::make_shared<const TrainingDefinition>(def));
  instances_[info.id] = inst;
  tokens_[info.access_token] = info.id;
  return info;
}

void Engine::close_instance(const std::string& instance_id) {
  auto inst = find_instance(instance_id);
  std::vector<std::shared_ptr<RunSlot>> slots;
  {
    std::unique_lock engine_lock(mu_);
    std::lock_guard lock(inst->mu);
    if (!inst->info.open) throw Error(ErrorCode::kWrongState, "instance " + instance_id + " is already closed");
    const TimestampMs now = clock_->now();
    append_registry({{"type", "closed"}, {"id", instance_id}, {"at_ms", ms_of(now)}});
    inst->info.open = false;
    inst->info.closed_at = now;
    inst->sankey.on_close();
    for (const auto& [id, slot] : inst->runs) slots.push_back(slot);
  }
  // Operations racing with the close fail in record(); nothing else moves.
  for (const auto& slot : slots) {
    std::lock_guard lock(slot->mu);
    if (slot->run.active()) {
      slot->run.state = RunState::kAbandoned;
      slot->run.parked = false;
    }
  }
}

std::shared_ptr<Engine::Instance> Engine::find_instance(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = instances_.find(id);
  if (it == instances_.end()) throw Error(ErrorCode::kNotFound, "unknown instance '" + id + "'");
  return it->second;
}

std::pair<std::shared_ptr<Engine::Instance>, std::shared_ptr<Engine::RunSlot>> Engine::find_run(
    const std::string& run_id) const {
  std::shared_ptr<Instance> inst;
  {
    std::shared_lock lock(mu_);
    auto it = run_index_.find(run_id);
    if (it == run_index_.end()) throw Error(ErrorCode::kNotFound, "unknown run '" + run_id + "'");
    inst = instances_.at(it->second);
  }
  std::lock_guard lock(inst->mu);
  return {inst, inst->runs.at(run_id)};
}

InstanceInfo Engine::instance(const std::string& instance_id) const {
  auto inst = find_instance(instance_id);
  std::lock_guard lock(inst->mu);
  return inst->info;
}

std::vector<InstanceInfo> Engine::instances() const {
  std::vector<std::shared_ptr<Instance>> all;
  {
    std::shared_lock lock(mu_);
    for (const auto& [id, inst] : instances_) all.push_back(inst);
  }
  std::vector<InstanceInfo> out;
  for (const auto& inst : all) {
    std::lock_guard lock(inst->mu);
    out.push_back(inst->info);
  }
  std::sort(out.begin(), out.end(), [](const InstanceInfo& a, const InstanceInfo& b) {
    return id_number(a.id) < id_number(b.id);
  });
  return out;
}

std::shared_ptr<const TrainingDefinition> Engine::definition_of(const std::string& instance_id) const {
  return find_instance(instance_id)->def;
}

const EventStore& Engine::store(const std::string& instance_id) const { return *find_instance(instance_id)->store; }

void Engine::record(Instance& inst, TrainingRun& run, TrainingActionEvent event) {
  event.run_id = run.run_id;
  event.user_ref = run.user_ref;
  event.timestamp = clock_->now();
  if (event.type == ActionType::kPhaseCompleted) {
    event.details["observed_us"] = std::chrono::duration_cast<std::chrono::microseconds>(
                                       event.timestamp - run.phase_started_at).count();
  }
  {
    std::lock_guard lock(inst.mu);
    if (!inst.info.open) throw Error(ErrorCode::kWrongState, "instance " + inst.info.id + " is closed");
    inst.store->ingest(event);
    inst.sankey.on_action(event);
  }
  apply(inst, run, event);
}

void Engine::apply(Instance& inst, TrainingRun& run, const TrainingActionEvent& e) const {
  const TrainingDefinition& def = *inst.def;
  ++run.action_count;
  auto apply_finalized = [&](const Json& f) {
    if (!f.is_object()) return;
    const int x = f.at("phase").get<int>();
    run.metrics.set_k(x, f.at("k").get<bool>());
    run.metrics.set_a(x, f.at("a").get<bool>());
    run.metrics.set_t(x, f.at("t").get<bool>());
    run.metrics.set_s(x, f.at("s").get<bool>());
    RunPhaseRecord& rec = run.records[x];
    rec.command_count = f.value("command_count", 0);
    rec.matched_keywords.clear();
    for (const auto& k : f.value("matched_keywords", Json::array())) rec.matched_keywords.insert(k.get<std::string>());
  };
  switch (e.type) {
    case ActionType::kTrainingStarted:
      run.state = RunState::kIntro;
      run.started_at = e.timestamp;
      run.sandbox_uid = e.details.value("sandbox_uid", std::int64_t{0});
      run.metrics = MetricVectors(def.phase_count());
      break;
    case ActionType::kAssessmentSubmitted: {
      Answers answers = answers_from_json(e.details.value("answers", Json::object()));
      const auto p = evaluate_pretraining(def.assessment, answers, def.phase_count());
      for (int i = 1; i <= def.phase_count(); ++i) run.metrics.set_p(i, p[static_cast<std::size_t>(i - 1)]);
      run.assessment_answers = std::move(answers);
      break;
    }
    case ActionType::kPhaseStarted: {
      apply_finalized(finalized_of(e.details));
      run.parked = false;
      run.park_reason.clear();
      if (!e.details.contains("phase")) {
        run.state = RunState::kQuestionnaire;
        break;
      }
      const int x = e.details.at("phase").get<int>();
      const int y = e.details.value("task", 1);
      run.state = RunState::kInPhase;
      run.phase = x;
      run.task = y;
      run.phase_completed = false;
      run.phase_started_at = e.timestamp;
      RunPhaseRecord rec;
      rec.phase = x;
      rec.task = y;
      run.records[x] = rec;
      Assignment a;
      a.phase = x;
      a.task = y;
      if (auto it = e.details.find("performance"); it != e.details.end()) {
        a.performance = parse_performance(it->get<std::string>());
      }
      a.manual = e.details.value("manual", false);
      run.assignments.push_back(a);
      break;
    }
    case ActionType::kWrongAnswerSubmitted:
      ++run.records[run.phase].wrong_answer_count;
      break;
    case ActionType::kCorrectAnswerSubmitted:
      run.records[run.phase].correct_answer_submitted = true;
      break;
    case ActionType::kSolutionDisplayed:
      run.records[run.phase].solution_displayed = true;
      break;
    case ActionType::kPhaseCompleted:
      run.phase_completed = true;
      run.records[run.phase].observed_time = std::chrono::microseconds{e.details.value("observed_us", std::int64_t{0})};
      break;
    case ActionType::kTrainingFinished:
      apply_finalized(finalized_of(e.details));
      if (auto it = e.details.find("answers"); it != e.details.end()) run.questionnaire_answers = *it;
      run.questionnaire_unanswered.clear();
      for (const auto& q : e.details.value("unanswered", Json::array())) {
        run.questionnaire_unanswered.push_back(q.get<std::string>());
      }
      run.parked = false;
      run.park_reason.clear();
      run.state = RunState::kFinished;
      break;
  }
}

Json Engine::finalize_phase(const Instance& inst, const TrainingRun& run) const {
  const int x = run.phase;
  const Timeline tl = adr::correlate(adr::query_events(*inst.store, run.binding()));
  auto wit = tl.phases.find(x);
  if (wit == tl.phases.end()) throw Error(ErrorCode::kWrongState, "phase " + std::to_string(x) + " has no window");
  std::vector<std::string> cmds;
  for (const auto& c : wit->second.commands) cmds.push_back(c.cmd);
  const PhaseMetricSpec& spec = inst.def->phase(x).metric_spec;
  RunPhaseRecord rec = run.records.at(x);
  rec.command_count = static_cast<int>(cmds.size());
  rec.matched_keywords = match_keywords(spec.required_keywords, cmds);
  const PhaseMetrics m = derive_phase_metrics(spec, rec);
  return {{"phase", x},
          {"k", m.k},
          {"a", m.a},
          {"t", m.t},
          {"s", m.s},
          {"command_count", rec.command_count},
          {"matched_keywords", rec.matched_keywords}};
}

TrainingRun Engine::join(const std::string& token, const std::string& user_ref) {
  if (user_ref.empty()) throw Error(ErrorCode::kInvalidArgument, "user_ref must not be empty");
  std::unique_lock engine_lock(mu_);
  auto tit = tokens_.find(token);
  if (tit == tokens_.end()) throw Error(ErrorCode::kBadToken, "unknown access token");
  auto inst = instances_.at(tit->second);
  std::lock_guard lock(inst->mu);
  if (!inst->info.open) throw Error(ErrorCode::kWrongState, "instance " + inst->info.id + " is closed");
  if (auto uit = inst->users.find(user_ref); uit != inst->users.end()) {
    auto slot = inst->runs.at(uit->second);
    std::lock_guard run_lock(slot->mu);
    if (slot->run.active()) return slot->run;
    throw Error(ErrorCode::kDuplicateUser, "user '" + user_ref + "' already took this instance");
  }
  if (static_cast<int>(inst->runs.size()) >= inst->info.capacity) {
    throw Error(ErrorCode::kCapacityExhausted,
                "instance " + inst->info.id + " is full (" + std::to_string(inst->info.capacity) + ")");
  }
  auto slot = std::make_shared<RunSlot>();
  TrainingRun& run = slot->run;
  run.run_id = std::to_string(next_run_);
  run.instance_id = inst->info.id;
  run.user_ref = user_ref;
  run.sandbox_uid = next_sandbox_;

  TrainingActionEvent e;
  e.type = ActionType::kTrainingStarted;
  e.run_id = run.run_id;
  e.user_ref = user_ref;
  e.timestamp = clock_->now();
  e.details = {{"sandbox_uid", run.sandbox_uid}};
  inst->store->ingest(e);
  inst->sankey.on_action(e);
  ++next_run_;
  ++next_sandbox_;
  apply(*inst, run, e);

  inst->runs[run.run_id] = slot;
  inst->users[user_ref] = run.run_id;
  run_index_[run.run_id] = inst->info.id;
  sandbox_index_[run.sandbox_uid] = inst->info.id;
  return run;
}

TaskAssignment Engine::submit_assessment(const std::string& run_id, const Answers& answers) {
  auto [inst, slot] = find_run(run_id);
  std::lock_guard lock(slot->mu);
  TrainingRun& run = slot->run;
  if (run.state != RunState::kIntro || run.assessment_answers) {
    throw Error(ErrorCode::kWrongState, "assessment already submitted or run not in intro");
  }
  // Rejects unknown question ids before anything is recorded.
  evaluate_pretraining(inst->def->assessment, answers, inst->def->phase_count());
  TrainingActionEvent e;
  e.type = ActionType::kAssessmentSubmitted;
  e.details = {{"answers", answers_to_json(answers)}};
  record(*inst, run, std::move(e));
  return *step(*inst, run).assignment;
}

AdvanceResult Engine::step(Instance& inst, TrainingRun& run) {
  const TrainingDefinition& def = *inst.def;
  Json finalized;
  MetricVectors v = run.metrics;
  int next = 1;
  if (run.state == RunState::kInPhase) {
    finalized = finalize_phase(inst, run);
    const int x = run.phase;
    v.set_k(x, finalized["k"].get<bool>());
    v.set_a(x, finalized["a"].get<bool>());
    v.set_t(x, finalized["t"].get<bool>());
    v.set_s(x, finalized["s"].get<bool>());
    next = x + 1;
  }
  if (next > def.phase_count()) {
    TrainingActionEvent e;
    AdvanceResult result;
    if (!def.questionnaire.empty()) {
      e.type = ActionType::kPhaseStarted;
      e.details = {{"node", "Q"}};
      result.kind = AdvanceResult::Kind::kQuestionnaire;
    } else {
      e.type = ActionType::kTrainingFinished;
      e.details = Json::object();
      result.kind = AdvanceResult::Kind::kFinished;
    }
    if (!finalized.is_null()) e.details["finalized"] = finalized;
    record(inst, run, std::move(e));
    return result;
  }
  TaskAssignment a;
  try {
    a = decide(def, next, v);
  } catch (const Error& err) {
    if (err.code() != ErrorCode::kUnsetMetric && err.code() != ErrorCode::kZeroDenominator) throw;
    run.parked = true;
    run.park_reason = err.what();
    spdlog::warn("run {} parked before phase {}: {}", run.run_id, next, err.what());
    throw Error(ErrorCode::kDecisionFailed, "decision for phase " + std::to_string(next) + " failed; run parked",
                err.what());
  }
  start_phase(inst, run, next, a, finalized, false);
  AdvanceResult result;
  result.assignment = std::move(a);
  return result;
}

void Engine::start_phase(Instance& inst, TrainingRun& run, int x, const TaskAssignment& a, const Json& finalized,
                         bool manual) {
  TrainingActionEvent e;
  e.type = ActionType::kPhaseStarted;
  e.details = {{"phase", x}, {"task", a.task}};
  if (a.performance) e.details["performance"] = a.performance->to_string();
  if (manual) e.details["manual"] = true;
  if (!finalized.is_null()) e.details["finalized"] = finalized;
  record(inst, run, std::move(e));
}

Verdict Engine::submit_answer(const std::string& run_id, const std::string& answer) {
  if (answer.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "answer must not be empty");
  }
  auto [inst, slot] = find_run(run_id);
  std::lock_guard lock(slot->mu);
  TrainingRun& run = slot->run;
  if (run.state != RunState::kInPhase || run.phase_completed) {
    throw Error(ErrorCode::kWrongState, "run " + run_id + " has no open task");
  }
  const Task& task = inst->def->phase(run.phase).task(run.task);
  TrainingActionEvent e;
  e.payload = answer;
  e.details = {{"phase", run.phase}};
  if (!task.accepts(answer)) {
    e.type = ActionType::kWrongAnswerSubmitted;
    record(*inst, run, std::move(e));
    return Verdict::kWrong;
  }
  e.type = ActionType::kCorrectAnswerSubmitted;
  record(*inst, run, std::move(e));
  TrainingActionEvent done;
  done.type = ActionType::kPhaseCompleted;
  done.details = {{"phase", run.phase}};
  record(*inst, run, std::move(done));
  return Verdict::kCorrect;
}

std::string Engine::reveal_solution(const std::string& run_id) {
  auto [inst, slot] = find_run(run_id);
  std::lock_guard lock(slot->mu);
  TrainingRun& run = slot->run;
  if (run.state != RunState::kInPhase || run.phase_completed) {
    throw Error(ErrorCode::kWrongState, "run " + run_id + " has no open task");
  }
  TrainingActionEvent e;
  e.type = ActionType::kSolutionDisplayed;
  e.details = {{"phase", run.phase}};
  record(*inst, run, std::move(e));
  return inst->def->phase(run.phase).task(run.task).solution;
}

AdvanceResult Engine::advance(const std::string& run_id) {
  auto [inst, slot] = find_run(run_id);
  std::lock_guard lock(slot->mu);
  TrainingRun& run = slot->run;
  const bool pending_first = run.state == RunState::kIntro && run.assessment_answers.has_value();
  const bool completed = run.state == RunState::kInPhase && run.phase_completed;
  if (!pending_first && !completed) {
    throw Error(ErrorCode::kWrongState, "run " + run_id + " cannot advance from " + std::string(to_string(run.state)) +
                                            (run.state == RunState::kInPhase ? " (phase not completed)" : ""));
  }
  return step(*inst, run);
}

void Engine::submit_questionnaire(const std::string& run_id, const Json& answers) {
  if (!answers.is_object()) throw Error(ErrorCode::kInvalidArgument, "questionnaire answers must be an object");
  auto [inst, slot] = find_run(run_id);
  std::lock_guard lock(slot->mu);
  TrainingRun& run = slot->run;
  if (run.state != RunState::kQuestionnaire) {
    throw Error(ErrorCode::kWrongState, "run " + run_id + " is not at the questionnaire");
  }
  Json unanswered = Json::array();
  for (const auto& q : inst->def->questionnaire) {
    if (!answers.contains(q.id) || answers[q.id].is_null()) unanswered.push_back(q.id);
  }
  TrainingActionEvent e;
  e.type = ActionType::kTrainingFinished;
  e.details = {{"answers", answers}, {"unanswered", unanswered}};
  record(*inst, run, std::move(e));
}

TaskAssignment Engine::assign_manually(const std::string& run_id, int task) {
  auto [inst, slot] = find_run(run_id);
  std::lock_guard lock(slot->mu);
  TrainingRun& run = slot->run;
  if (!run.parked) throw Error(ErrorCode::kWrongState, "run " + run_id + " is not parked");
  const int next = run.state == RunState::kIntro ? 1 : run.phase + 1;
  const int n = inst->def->phase(next).task_count();
  if (task < 1 || task > n) {
    throw Error(ErrorCode::kInvalidArgument, "phase " + std::to_string(next) + " has tasks 1.." + std::to_string(n));
  }
  const Json finalized = run.state == RunState::kInPhase ? finalize_phase(*inst, run) : Json();
  TaskAssignment a;
  a.phase = next;
  a.task = task;
  start_phase(*inst, run, next, a, finalized, true);
  return a;
}

TrainingRun Engine::run(const std::string& run_id) const {
  auto [inst, slot] = find_run(run_id);
  std::lock_guard lock(slot->mu);
  return slot->run;
}

std::vector<TrainingRun> Engine::runs(const std::string& instance_id) const {
  auto inst = find_instance(instance_id);
  std::vector<std::shared_ptr<RunSlot>> slots;
  {
    std::lock_guard lock(inst->mu);
    for (const auto& [id, slot] : inst->runs) slots.push_back(slot);
  }
  std::vector<TrainingRun> out;
  for (const auto& slot : slots) {
    std::lock_guard lock(slot->mu);
    out.push_back(slot->run);
  }
  std::sort(out.begin(), out.end(),
            [](const TrainingRun& a, const TrainingRun& b) { return id_number(a.run_id) < id_number(b.run_id); });
  return out;
}

std::vector<Alert> Engine::alerts(const std::string& instance_id) const {
  auto def = definition_of(instance_id);
  std::vector<Alert> out;
  for (const auto& run : runs(instance_id)) {
    if (run.parked) {
      const int next = run.state == RunState::kIntro ? 1 : run.phase + 1;
      out.push_back({run.run_id, run.user_ref, next, "parked", run.park_reason});
      continue;
    }
    if (run.state != RunState::kInPhase) continue;
    const int n = def->phase(run.phase).task_count();
    auto it = run.records.find(run.phase);
    if (n > 1 && run.task == n && it != run.records.end() && it->second.solution_displayed) {
      out.push_back({run.run_id, run.user_ref, run.phase, "struggling",
                     "revealed the solution of the easiest task of phase " + std::to_string(run.phase)});
    }
  }
  return out;
}

SankeyFlow Engine::live_sankey(const std::string& instance_id) const {
  auto inst = find_instance(instance_id);
  std::lock_guard lock(inst->mu);
  return inst->sankey.flow();
}

std::uint64_t Engine::ingest_command(const std::string& instance_id, const CommandEvent& event,
                                     std::optional<std::string> dedup_key) {
  return find_instance(instance_id)->store->ingest(event, std::move(dedup_key));
}

std::optional<std::uint64_t> Engine::route_command(const CommandEvent& event, std::optional<std::string> dedup_key) {
  std::string instance_id;
  {
    std::shared_lock lock(mu_);
    auto it = sandbox_index_.find(event.sandbox_uid);
    if (it == sandbox_index_.end()) return std::nullopt;
    instance_id = it->second;
  }
  return ingest_command(instance_id, event, std::move(dedup_key));
}

std::uint64_t Engine::ingest_external_action(TrainingActionEvent event, std::optional<std::string> dedup_key) {
  auto [inst, slot] = find_run(event.run_id);
  event.external = true;
  return inst->store->ingest(event, std::move(dedup_key));
}

void Engine::dead_letter(const std::string& instance_id, DeadLetter letter) {
  find_instance(instance_id)->store->dead_letter(std::move(letter));
}

void Engine::dead_letter_unbound(DeadLetter letter) { unbound_->dead_letter(std::move(letter)); }

std::vector<DeadLetter> Engine::unbound_dead_letters() const { return unbound_->dead_letters(); }

std::vector<TimelineEvent> Engine::query_events(const std::string& run_id, std::optional<TimeWindow> window) const {
  auto [inst, slot] = find_run(run_id);
  RunBinding binding;
  {
    std::lock_guard lock(slot->mu);
    binding = slot->run.binding();
  }
  return adr::query_events(*inst->store, binding, window);
}

Timeline Engine::correlate(const std::string& run_id) const { return adr::correlate(query_events(run_id)); }

void Engine::recover() {
  const auto registry = options_.store_dir / kRegistryFile;
  if (std::filesystem::exists(registry)) {
    std::ifstream in(registry, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::size_t keep = content.rfind('\n') == std::string::npos ? 0 : content.rfind('\n') + 1;
    if (keep < content.size()) {
      spdlog::warn("registry: discarding {} bytes of a torn final record", content.size() - keep);
      std::filesystem::resize_file(registry, keep);
    }
    std::istringstream lines(content.substr(0, keep));
    std::string line;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      Json j;
      try {
        j = Json::parse(line);
      } catch (const Json::exception& e) {
        throw Error(ErrorCode::kStorageFailure, "corrupt registry record", e.what());
      }
      const std::string type = j.value("type", "");
      if (type == "definition") {
        TrainingDefinition def = definition_from_json(j.at("definition"));
        definitions_[def.id] = std::move(def);
      } else if (type == "created") {
        const Json& ij = j.at("instance");
        InstanceInfo info;
        info.id = ij.at("id").get<std::string>();
        info.definition_id = ij.value("definition_id", "");
        info.definition_version = ij.value("definition_version", 1);
        info.access_token = ij.at("access_token").get<std::string>();
        info.capacity = ij.at("capacity").get<int>();
        info.created_at = ms_at(ij.value("created_at_ms", std::int64_t{0}));
        auto def = std::make_shared<const TrainingDefinition>(definition_from_json(j.at("definition")));
        tokens_[info.access_token] = info.id;
        next_instance_ = std::max<std::uint64_t>(next_instance_, id_number(info.id) + 1);
        const std::string id = info.id;
        instances_[id] = make_instance(std::move(info), std::move(def));
      } else if (type == "closed") {
        auto it = instances_.find(j.at("id").get<std::string>());
        if (it == instances_.end()) continue;
        it->second->info.open = false;
        it->second->info.closed_at = ms_at(j.value("at_ms", std::int64_t{0}));
      }
    }
  }

  for (auto& [id, inst] : instances_) {
    if (inst->store->truncated_bytes() > 0) {
      spdlog::warn("instance {}: discarded {} bytes of a torn final record", id, inst->store->truncated_bytes());
    }
    inst->store->visit([&, &inst = inst](const Envelope& env) {
      if (env.kind != EventKind::kAction) return;
      const TrainingActionEvent a = action_from_json(env.body);
      if (a.external) return;
      if (a.type == ActionType::kTrainingStarted && !inst->runs.count(a.run_id)) {
        auto slot = std::make_shared<RunSlot>();
        slot->run.run_id = a.run_id;
        slot->run.instance_id = inst->info.id;
        slot->run.user_ref = a.user_ref;
        inst->runs[a.run_id] = slot;
        inst->users[a.user_ref] = a.run_id;
        run_index_[a.run_id] = inst->info.id;
        const std::int64_t uid = a.details.value("sandbox_uid", std::int64_t{0});
        sandbox_index_[uid] = inst->info.id;
        next_run_ = std::max<std::uint64_t>(next_run_, id_number(a.run_id) + 1);
        next_sandbox_ = std::max<std::int64_t>(next_sandbox_, uid + 1);
      }
      auto it = inst->runs.find(a.run_id);
      if (it == inst->runs.end()) {
        spdlog::warn("instance {}: action for unknown run {} at seq {}", inst->info.id, a.run_id, env.seq);
        return;
      }
      inst->sankey.on_action(a);
      apply(*inst, it->second->run, a);
    });
    if (!inst->info.open) {
      inst->sankey.on_close();
      for (auto& [rid, slot] : inst->runs) {
        if (slot->run.active()) slot->run.state = RunState::kAbandoned;
      }
    }
  }
}

}  // namespace adr
