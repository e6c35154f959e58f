#include <gtest/gtest.h>

#include "adr/error.hpp"
#include "adr/telemetry.hpp"

namespace adr {
namespace {

TimestampUs us(std::int64_t v) { return TimestampUs{std::chrono::microseconds{v}}; }

CommandEvent cmd(std::int64_t at_us, const std::string& text, std::int64_t uid = 9) {
  CommandEvent e;
  e.timestamp = us(at_us);
  e.cmd = text;
  e.sandbox_uid = uid;
  return e;
}

TrainingActionEvent act(std::int64_t at_ms, ActionType type, Json details = Json::object(),
                        const std::string& run = "r1") {
  TrainingActionEvent a;
  a.timestamp = TimestampMs{std::chrono::milliseconds{at_ms}};
  a.type = type;
  a.run_id = run;
  a.details = std::move(details);
  return a;
}

TEST(TelemetryTest, QueryFiltersAndOrdersByMicroseconds) {
  EventStore s;
  s.ingest(cmd(2500, "late"));
  s.ingest(act(2, ActionType::kTrainingStarted));
  s.ingest(cmd(1999, "early"));
  s.ingest(cmd(2000, "other sandbox", 10));
  s.ingest(act(1, ActionType::kTrainingStarted, {}, "r2"));
  const RunBinding b{"r1", "u", 9};
  const auto events = query_events(s, b);
  ASSERT_EQ(events.size(), 3u);
  EXPECT_EQ(events[0].command().cmd, "early");
  EXPECT_FALSE(events[1].is_command());
  EXPECT_EQ(events[2].command().cmd, "late");
  // Half-open window and sequence bound.
  EXPECT_EQ(query_events(s, b, TimeWindow{us(1999), us(2000)}).size(), 1u);
  EXPECT_EQ(query_events(s, b, std::nullopt, 2).size(), 2u);
}

TEST(TelemetryTest, EqualTimestampsKeepStoreOrder) {
  EventStore s;
  s.ingest(cmd(5000, "a"));
  s.ingest(act(5, ActionType::kTrainingStarted));
  s.ingest(cmd(5000, "b"));
  const auto events = query_events(s, {"r1", "u", 9});
  ASSERT_EQ(events.size(), 3u);
  EXPECT_LT(events[0].seq, events[1].seq);
  EXPECT_LT(events[1].seq, events[2].seq);
}

TEST(TelemetryTest, CorrelateBucketsEveryCommandOnce) {
  EventStore s;
  s.ingest(cmd(500, "pre"));
  s.ingest(act(1, ActionType::kPhaseStarted, {{"phase", 1}, {"task", 2}}));
  s.ingest(cmd(1500, "in1"));
  s.ingest(cmd(1600, "in1b"));
  s.ingest(act(2, ActionType::kPhaseCompleted, {{"phase", 1}}));
  s.ingest(cmd(2500, "gap"));
  s.ingest(act(3, ActionType::kPhaseStarted, {{"phase", 2}, {"task", 1}}));
  s.ingest(cmd(3500, "in2"));
  s.ingest(act(4, ActionType::kPhaseCompleted, {{"phase", 2}}));
  s.ingest(cmd(4001, "post"));
  const Timeline t = correlate(query_events(s, {"r1", "u", 9}));
  ASSERT_EQ(t.phases.size(), 2u);
  EXPECT_EQ(t.pre_run.size(), 1u);
  EXPECT_EQ(t.phases.at(1).commands.size(), 2u);
  EXPECT_EQ(t.phases.at(1).task, 2);
  EXPECT_EQ(t.phases.at(1).observed_time(), std::chrono::microseconds{1000});
  EXPECT_EQ(t.between.size(), 1u);
  EXPECT_EQ(t.phases.at(2).commands.size(), 1u);
  EXPECT_EQ(t.post_run.size(), 1u);
  EXPECT_EQ(t.command_total(), 6u);
}

TEST(TelemetryTest, OpenPhaseHasZeroObservedTime) {
  EventStore s;
  s.ingest(act(1, ActionType::kPhaseStarted, {{"phase", 1}, {"task", 1}}));
  s.ingest(cmd(5000, "x"));
  const Timeline t = correlate(query_events(s, {"r1", "u", 9}));
  EXPECT_FALSE(t.phases.at(1).complete);
  EXPECT_EQ(t.phases.at(1).observed_time().count(), 0);
  EXPECT_EQ(t.phases.at(1).commands.size(), 1u);
}

TEST(TelemetryTest, OverlappingPhasesRejected) {
  EventStore s;
  s.ingest(act(1, ActionType::kPhaseStarted, {{"phase", 1}, {"task", 1}}));
  s.ingest(act(2, ActionType::kPhaseStarted, {{"phase", 2}, {"task", 1}}));
  try {
    correlate(query_events(s, {"r1", "u", 9}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOverlappingPhases);
  }
}

}  // namespace
}  // namespace adr
