#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace adr {

using Json = nlohmann::json;
using TimestampUs = std::chrono::sys_time<std::chrono::microseconds>;
using TimestampMs = std::chrono::sys_time<std::chrono::milliseconds>;

// One shell command captured in a sandbox.
struct CommandEvent {
  TimestampUs timestamp{};
  std::string username;
  std::string hostname;
  std::string src_ip;
  std::string cmd;
  std::string cmd_type;
  std::int64_t sandbox_uid = 0;
  std::string wd;
  std::map<std::string, std::string> extra;  // keys the parser did not recognise

  bool operator==(const CommandEvent&) const = default;
};

enum class ActionType {
  kTrainingStarted,
  kAssessmentSubmitted,
  kPhaseStarted,
  kCorrectAnswerSubmitted,
  kWrongAnswerSubmitted,
  kSolutionDisplayed,
  kPhaseCompleted,
  kTrainingFinished,
};

// Dotted form, e.g. "action.training.WrongAnswerSubmitted".
std::string_view to_string(ActionType type);
// Accepts the dotted form or the bare name.
std::optional<ActionType> parse_action_type(std::string_view text);

struct TrainingActionEvent {
  TimestampMs timestamp{};
  ActionType type = ActionType::kTrainingStarted;
  std::string user_ref;
  std::string run_id;
  std::optional<std::string> payload;
  // Structured bookkeeping written by the runtime (phase, task, ...).
  Json details = Json::object();
  // Posted through the public intake rather than produced by the runtime.
  // External actions are telemetry only and never drive run state.
  bool external = false;

  bool operator==(const TrainingActionEvent&) const = default;
};

Json to_json(const CommandEvent& e);
CommandEvent command_from_json(const Json& j);
Json to_json(const TrainingActionEvent& e);
TrainingActionEvent action_from_json(const Json& j);

// Actions travel in milliseconds, commands in microseconds.
inline TimestampUs to_micros(TimestampMs t) {
  return std::chrono::time_point_cast<std::chrono::microseconds>(t);
}

}  // namespace adr
