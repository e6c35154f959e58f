#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "adr/event_store.hpp"
#include "adr/events.hpp"
#include "adr/model.hpp"
#include "adr/sankey.hpp"
#include "adr/telemetry.hpp"
#include "adr/tutor.hpp"

namespace adr {

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimestampMs now() const = 0;
};

class SystemClock final : public Clock {
 public:
  TimestampMs now() const override {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
  }
};

// Settable clock for simulation and tests.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(TimestampMs start = TimestampMs{}) : now_(start.time_since_epoch().count()) {}

  TimestampMs now() const override { return TimestampMs{std::chrono::milliseconds{now_.load()}}; }
  void set(TimestampMs t) { now_ = t.time_since_epoch().count(); }
  void advance(std::chrono::milliseconds d) { now_ += d.count(); }

 private:
  std::atomic<std::int64_t> now_;
};

// Intro -> InPhase(1, y) -> ... -> InPhase(m, y) -> Questionnaire -> Finished.
// The assessment is submitted from Intro; Abandoned is entered when the
// instance closes under a run that has not finished.
enum class RunState { kIntro, kInPhase, kQuestionnaire, kFinished, kAbandoned };

std::string_view to_string(RunState state);

struct Assignment {
  int phase = 0;
  int task = 1;
  std::optional<PerformanceScore> performance;
  bool manual = false;

  bool operator==(const Assignment&) const = default;
};

struct TrainingRun {
  std::string run_id;
  std::string instance_id;
  std::string user_ref;
  std::int64_t sandbox_uid = 0;
  RunState state = RunState::kIntro;
  int phase = 0;  // current phase while InPhase, last phase otherwise
  int task = 0;
  bool phase_completed = false;
  bool parked = false;
  std::string park_reason;
  MetricVectors metrics;
  std::vector<Assignment> assignments;
  std::map<int, RunPhaseRecord> records;
  std::optional<Answers> assessment_answers;
  std::optional<Json> questionnaire_answers;
  std::vector<std::string> questionnaire_unanswered;
  TimestampMs started_at{};
  TimestampMs phase_started_at{};
  std::size_t action_count = 0;

  bool active() const { return state != RunState::kFinished && state != RunState::kAbandoned; }
  RunBinding binding() const { return {run_id, user_ref, sandbox_uid}; }

  bool operator==(const TrainingRun&) const = default;
};

struct InstanceInfo {
  std::string id;
  std::string definition_id;
  int definition_version = 1;
  std::string access_token;
  int capacity = 1;
  bool open = true;
  TimestampMs created_at{};
  std::optional<TimestampMs> closed_at;

  bool operator==(const InstanceInfo&) const = default;
};

struct Alert {
  std::string run_id;
  std::string user_ref;
  int phase = 0;
  std::string kind;  // "parked" | "struggling"
  std::string message;
};

enum class Verdict { kCorrect, kWrong };

Json to_json(const InstanceInfo& info, bool with_token = false);
Json to_json(const TrainingRun& run);
Json to_json(const Alert& alert);
Json to_json(const TaskAssignment& assignment);

struct AdvanceResult {
  enum class Kind { kAssignment, kQuestionnaire, kFinished } kind = Kind::kAssignment;
  std::optional<TaskAssignment> assignment;
};

struct EngineOptions {
  // Empty: nothing is persisted.
  std::filesystem::path store_dir;
  std::shared_ptr<Clock> clock;
  bool sync_each_append = false;
  // Refuse definitions with validation errors at instance creation.
  bool validate_definitions = true;
  // Overrides the random access-token source (tests).
  std::function<std::string()> token_source;
};

// Training lifecycle: instances, runs, and the decision step applied at
// every phase transition. Every run-visible change is an action appended
// to the instance's event store first and then applied to the in-memory
// run, so reopening the store directory rebuilds identical state.
class Engine {
 public:
  explicit Engine(EngineOptions options = {});
  ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const Clock& clock() const { return *clock_; }

  // Re-registering an identical document is a no-op; a changed document
  // must carry a higher version (Error{kVersionConflict} otherwise).
  void register_definition(const TrainingDefinition& def);
  std::optional<TrainingDefinition> find_definition(const std::string& id) const;

  InstanceInfo create_instance(const std::string& definition_id, int capacity);
  InstanceInfo create_instance(const TrainingDefinition& def, int capacity);
  void close_instance(const std::string& instance_id);

  InstanceInfo instance(const std::string& instance_id) const;
  std::vector<InstanceInfo> instances() const;
  std::shared_ptr<const TrainingDefinition> definition_of(const std::string& instance_id) const;
  const EventStore& store(const std::string& instance_id) const;

  TrainingRun join(const std::string& token, const std::string& user_ref);
  TaskAssignment submit_assessment(const std::string& run_id, const Answers& answers);
  Verdict submit_answer(const std::string& run_id, const std::string& answer);
  std::string reveal_solution(const std::string& run_id);
  AdvanceResult advance(const std::string& run_id);
  void submit_questionnaire(const std::string& run_id, const Json& answers);
  // Instructor override for a parked run: serve `task` in the next phase.
  TaskAssignment assign_manually(const std::string& run_id, int task);

  TrainingRun run(const std::string& run_id) const;
  std::vector<TrainingRun> runs(const std::string& instance_id) const;
  std::vector<Alert> alerts(const std::string& instance_id) const;
  SankeyFlow live_sankey(const std::string& instance_id) const;

  // Telemetry intake. Commands route by sandbox uid; actions by run id.
  std::uint64_t ingest_command(const std::string& instance_id, const CommandEvent& event,
                               std::optional<std::string> dedup_key = std::nullopt);
  std::optional<std::uint64_t> route_command(const CommandEvent& event,
                                             std::optional<std::string> dedup_key = std::nullopt);
  std::uint64_t ingest_external_action(TrainingActionEvent event, std::optional<std::string> dedup_key = std::nullopt);
  void dead_letter(const std::string& instance_id, DeadLetter letter);
  // Dead letters that could not be bound to any instance.
  void dead_letter_unbound(DeadLetter letter);
  std::vector<DeadLetter> unbound_dead_letters() const;

  std::vector<TimelineEvent> query_events(const std::string& run_id,
                                          std::optional<TimeWindow> window = std::nullopt) const;
  Timeline correlate(const std::string& run_id) const;

 private:
  struct RunSlot;
  struct Instance;

  std::shared_ptr<Instance> find_instance(const std::string& id) const;
  std::pair<std::shared_ptr<Instance>, std::shared_ptr<RunSlot>> find_run(const std::string& run_id) const;
  void record(Instance& inst, TrainingRun& run, TrainingActionEvent event);
  void apply(Instance& inst, TrainingRun& run, const TrainingActionEvent& event) const;
  Json finalize_phase(const Instance& inst, const TrainingRun& run) const;
  // Decision step out of the current position; the run's mutex is held.
  AdvanceResult step(Instance& inst, TrainingRun& run);
  void start_phase(Instance& inst, TrainingRun& run, int x, const TaskAssignment& a, const Json& finalized,
                   bool manual);
  std::shared_ptr<Instance> make_instance(InstanceInfo info, std::shared_ptr<const TrainingDefinition> def);
  void recover();
  void append_registry(const Json& line);
  std::string new_token();

  EngineOptions options_;
  std::shared_ptr<Clock> clock_;
  mutable std::shared_mutex mu_;
  std::map<std::string, TrainingDefinition> definitions_;
  std::map<std::string, std::shared_ptr<Instance>> instances_;
  std::map<std::string, std::string> tokens_;         // token -> instance
  std::map<std::string, std::string> run_index_;      // run -> instance
  std::map<std::int64_t, std::string> sandbox_index_;  // sandbox uid -> instance
  std::uint64_t next_instance_ = 1;
  std::uint64_t next_run_ = 1;
  std::int64_t next_sandbox_ = 1;
  std::unique_ptr<EventStore> unbound_;
};

}  // namespace adr
