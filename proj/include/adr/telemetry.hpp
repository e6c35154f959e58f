#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "adr/event_store.hpp"
#include "adr/events.hpp"

namespace adr {

// Which telemetry belongs to one run: actions by run id, commands by the
// sandbox bound at join time.
struct RunBinding {
  std::string run_id;
  std::string user_ref;
  std::int64_t sandbox_uid = 0;
};

// Half-open [begin, end).
struct TimeWindow {
  TimestampUs begin;
  TimestampUs end;

  bool contains(TimestampUs t) const { return begin <= t && t < end; }
};

struct TimelineEvent {
  TimestampUs at;
  std::uint64_t seq = 0;
  std::variant<CommandEvent, TrainingActionEvent> event;

  bool is_command() const { return std::holds_alternative<CommandEvent>(event); }
  const CommandEvent& command() const { return std::get<CommandEvent>(event); }
  const TrainingActionEvent& action() const { return std::get<TrainingActionEvent>(event); }
};

// Events of one run ordered by (timestamp in µs, seq).
std::vector<TimelineEvent> query_events(const EventStore& store, const RunBinding& run,
                                        std::optional<TimeWindow> window = std::nullopt,
                                        std::optional<std::uint64_t> up_to_seq = std::nullopt);

struct PhaseWindow {
  int phase = 0;
  int task = 1;
  TimestampUs start;
  std::optional<TimestampUs> complete;
  std::vector<CommandEvent> commands;

  // o_i; zero while the phase is still open.
  std::chrono::microseconds observed_time() const {
    return complete ? *complete - start : std::chrono::microseconds{0};
  }
};

// Every command lands in exactly one bucket: before the first phase,
// inside a phase window, in the gap between two phases, or after the last
// completed phase.
struct Timeline {
  std::vector<CommandEvent> pre_run;
  std::map<int, PhaseWindow> phases;
  std::vector<CommandEvent> between;
  std::vector<CommandEvent> post_run;

  std::size_t command_total() const;
};

// Throws Error{kOverlappingPhases} when PhaseStarted/PhaseCompleted actions
// do not describe disjoint, ordered windows.
Timeline correlate(const std::vector<TimelineEvent>& events);

}  // namespace adr
