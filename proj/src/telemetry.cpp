#include "adr/telemetry.hpp"

#include <algorithm>
#include <array>

#include "adr/error.hpp"

namespace adr {
namespace {

struct ActionName {
  ActionType type;
  std::string_view dotted;
};

constexpr std::array<ActionName, 8> kActionNames = {{
    {ActionType::kTrainingStarted, "action.training.TrainingStarted"},
    {ActionType::kAssessmentSubmitted, "action.training.AssessmentSubmitted"},
    {ActionType::kPhaseStarted, "action.training.PhaseStarted"},
    {ActionType::kCorrectAnswerSubmitted, "action.training.CorrectAnswerSubmitted"},
    {ActionType::kWrongAnswerSubmitted, "action.training.WrongAnswerSubmitted"},
    {ActionType::kSolutionDisplayed, "action.training.SolutionDisplayed"},
    {ActionType::kPhaseCompleted, "action.training.PhaseCompleted"},
    {ActionType::kTrainingFinished, "action.training.TrainingFinished"},
}};

constexpr std::string_view kPrefix = "action.training.";

std::string str_or_empty(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) throw Error(ErrorCode::kInvalidArgument, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

// Refs arrive as strings or bare integers ("user 5", "run 3").
std::string ref_field(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) throw Error(ErrorCode::kInvalidArgument, std::string("missing field '") + key + "'");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  throw Error(ErrorCode::kInvalidArgument, std::string("field '") + key + "' must be a string or integer");
}

}  // namespace

std::string_view to_string(ActionType type) {
  for (const auto& n : kActionNames) {
    if (n.type == type) return n.dotted;
  }
  return "action.training.Unknown";
}

std::optional<ActionType> parse_action_type(std::string_view text) {
  if (text == "AnswerSubmitted-Correct" || text == "action.training.AnswerSubmitted-Correct") {
    return ActionType::kCorrectAnswerSubmitted;
  }
  for (const auto& n : kActionNames) {
    if (text == n.dotted || text == n.dotted.substr(kPrefix.size())) return n.type;
  }
  return std::nullopt;
}

Json to_json(const CommandEvent& e) {
  Json j = {{"timestamp_us", e.timestamp.time_since_epoch().count()},
            {"username", e.username},
            {"hostname", e.hostname},
            {"src_ip", e.src_ip},
            {"cmd", e.cmd},
            {"cmd_type", e.cmd_type},
            {"sandbox_uid", e.sandbox_uid},
            {"wd", e.wd}};
  if (!e.extra.empty()) j["extra"] = e.extra;
  return j;
}

CommandEvent command_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "command record must be an object");
  CommandEvent e;
  e.timestamp = TimestampUs{std::chrono::microseconds{j.at("timestamp_us").get<std::int64_t>()}};
  e.username = str_or_empty(j, "username");
  e.hostname = str_or_empty(j, "hostname");
  e.src_ip = str_or_empty(j, "src_ip");
  e.cmd = str_or_empty(j, "cmd");
  e.cmd_type = str_or_empty(j, "cmd_type");
  e.sandbox_uid = j.at("sandbox_uid").get<std::int64_t>();
  e.wd = str_or_empty(j, "wd");
  if (auto it = j.find("extra"); it != j.end()) e.extra = it->get<std::map<std::string, std::string>>();
  if (e.cmd.empty()) throw Error(ErrorCode::kInvalidArgument, "command record has an empty cmd");
  if (e.sandbox_uid < 0) throw Error(ErrorCode::kInvalidArgument, "sandbox uid must be non-negative");
  return e;
}

Json to_json(const TrainingActionEvent& e) {
  Json j = {{"timestamp_ms", e.timestamp.time_since_epoch().count()},
            {"action_type", std::string(to_string(e.type))},
            {"user_ref", e.user_ref},
            {"run_id", e.run_id}};
  if (e.payload) j["payload"] = *e.payload;
  if (e.details.is_object() && !e.details.empty()) j["details"] = e.details;
  if (e.external) j["external"] = true;
  return j;
}

TrainingActionEvent action_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "action record must be an object");
  TrainingActionEvent e;
  auto ts = j.find("timestamp_ms");
  if (ts == j.end() || !ts->is_number_integer()) {
    throw Error(ErrorCode::kInvalidArgument, "timestamp_ms must be an integer epoch in milliseconds");
  }
  e.timestamp = TimestampMs{std::chrono::milliseconds{ts->get<std::int64_t>()}};
  const std::string type = str_or_empty(j, "action_type");
  auto parsed = parse_action_type(type);
  if (!parsed) throw Error(ErrorCode::kInvalidArgument, "unknown action_type '" + type + "'");
  e.type = *parsed;
  e.user_ref = ref_field(j, "user_ref");
  e.run_id = ref_field(j, "run_id");
  if (auto it = j.find("payload"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(ErrorCode::kInvalidArgument, "payload must be text");
    e.payload = it->get<std::string>();
  }
  if (auto it = j.find("details"); it != j.end() && it->is_object()) e.details = *it;
  if (auto it = j.find("external"); it != j.end() && it->is_boolean()) e.external = it->get<bool>();
  return e;
}

std::vector<TimelineEvent> query_events(const EventStore& store, const RunBinding& run,
                                        std::optional<TimeWindow> window, std::optional<std::uint64_t> up_to_seq) {
  std::vector<TimelineEvent> out;
  store.visit(
      [&](const Envelope& env) {
        if (env.kind == EventKind::kCommand) {
          if (env.body.value("sandbox_uid", std::int64_t{-1}) != run.sandbox_uid) return;
          CommandEvent c = command_from_json(env.body);
          if (window && !window->contains(c.timestamp)) return;
          const TimestampUs at = c.timestamp;
          out.push_back({at, env.seq, std::move(c)});
        } else {
          const Json& rid = env.body["run_id"];
          if (!rid.is_string() || rid.get_ref<const std::string&>() != run.run_id) return;
          TrainingActionEvent a = action_from_json(env.body);
          const TimestampUs at = to_micros(a.timestamp);
          if (window && !window->contains(at)) return;
          out.push_back({at, env.seq, std::move(a)});
        }
      },
      up_to_seq);
  std::stable_sort(out.begin(), out.end(), [](const TimelineEvent& a, const TimelineEvent& b) {
    return a.at != b.at ? a.at < b.at : a.seq < b.seq;
  });
  return out;
}

std::size_t Timeline::command_total() const {
  std::size_t n = pre_run.size() + between.size() + post_run.size();
  for (const auto& [x, w] : phases) n += w.commands.size();
  return n;
}

Timeline correlate(const std::vector<TimelineEvent>& events) {
  Timeline tl;
  // Pass 1: phase windows from the run's own (non-external) actions.
  int open_phase = 0;  // 0: no phase open
  for (const auto& ev : events) {
    if (ev.is_command()) continue;
    const TrainingActionEvent& a = ev.action();
    if (a.external) continue;
    if (a.type == ActionType::kPhaseStarted) {
      if (!a.details.contains("phase")) continue;  // questionnaire node
      const int x = a.details["phase"].get<int>();
      if (open_phase != 0) {
        throw Error(ErrorCode::kOverlappingPhases, "phase " + std::to_string(x) + " started while phase " +
                                                       std::to_string(open_phase) + " is still open");
      }
      if (tl.phases.count(x) || (!tl.phases.empty() && tl.phases.rbegin()->first > x)) {
        throw Error(ErrorCode::kOverlappingPhases, "phase " + std::to_string(x) + " started out of order");
      }
      PhaseWindow w;
      w.phase = x;
      w.task = a.details.value("task", 1);
      w.start = ev.at;
      tl.phases[x] = std::move(w);
      open_phase = x;
    } else if (a.type == ActionType::kPhaseCompleted) {
      const int x = a.details.value("phase", 0);
      if (open_phase == 0 || open_phase != x) {
        throw Error(ErrorCode::kOverlappingPhases, "phase " + std::to_string(x) + " completed but never opened");
      }
      tl.phases[x].complete = ev.at;
      open_phase = 0;
    }
  }

  // Pass 2: attribute commands.
  for (const auto& ev : events) {
    if (!ev.is_command()) continue;
    const CommandEvent& c = ev.command();
    if (tl.phases.empty() || c.timestamp < tl.phases.begin()->second.start) {
      tl.pre_run.push_back(c);
      continue;
    }
    bool placed = false;
    for (auto& [x, w] : tl.phases) {
      if (c.timestamp >= w.start && (!w.complete || c.timestamp < *w.complete)) {
        w.commands.push_back(c);
        placed = true;
        break;
      }
    }
    if (placed) continue;
    const PhaseWindow& last = tl.phases.rbegin()->second;
    if (last.complete && c.timestamp >= *last.complete) {
      tl.post_run.push_back(c);
    } else {
      tl.between.push_back(c);
    }
  }
  return tl;
}

}  // namespace adr
