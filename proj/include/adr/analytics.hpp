#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adr/runtime.hpp"
#include "adr/sankey.hpp"

namespace adr {

inline constexpr const char* kExportSchema = "adr.export/v1";

// Batch replay of an instance's store. Actions after `as_of` are ignored; the
// instance close applies only when it happened at or before `as_of`.
SankeyFlow replay_sankey(const TrainingDefinition& def, const EventStore& store,
                         std::optional<TimestampMs> as_of = std::nullopt,
                         std::optional<TimestampMs> closed_at = std::nullopt);
SankeyFlow sankey(const Engine& engine, const std::string& instance_id,
                  std::optional<TimestampMs> as_of = std::nullopt);

struct PathEntry {
  int phase = 0;
  int task = 1;
  std::optional<PerformanceScore> performance;
  bool manual = false;
  bool completed = false;
  std::chrono::microseconds observed_time{0};
  int wrong_answer_count = 0;
  bool solution_displayed = false;
  int command_count = 0;
  // Relative to the previous entry; a larger task order is easier, so it
  // renders lower: "start", "down", "up" or "level".
  std::string direction;
};

struct StudentPath {
  std::string run_id;
  std::string user_ref;
  std::vector<PathEntry> entries;
  // "in_progress", "parked", "questionnaire", "finished" or "abandoned".
  std::string terminal;
};

StudentPath student_path(const Engine& engine, const std::string& run_id);

// Descriptive statistics with exact mean and median kept as fractions.
struct Describe {
  std::size_t count = 0;
  std::uint64_t min = 0;
  std::uint64_t max = 0;
  std::uint64_t total = 0;
  std::uint64_t mean_num = 0;
  std::uint64_t mean_den = 1;
  std::uint64_t mean_rounded = 0;  // half up
  std::uint64_t median_num = 0;
  std::uint64_t median_den = 1;
};

// Throws Error{kEmpty} for an empty sample.
Describe describe(std::vector<std::uint64_t> values);

struct StudentCounts {
  std::string instance_id;
  std::string run_id;
  std::string user_ref;
  std::uint64_t actions = 0;
  std::uint64_t commands = 0;
};

struct RunStats {
  std::vector<StudentCounts> students;
  Describe actions;
  Describe commands;
};

// Over finished and abandoned runs. Throws Error{kEmpty} when there are none.
RunStats summary_stats(const Engine& engine, const std::vector<std::string>& instance_ids);

Json to_json(const SankeyFlow& flow);
Json to_json(const StudentPath& path);
Json to_json(const Describe& d);
Json to_json(const RunStats& stats);

// format: "sankey", "paths" or "stats". Keys are sorted, so dumping the
// document twice for the same as-of instant gives identical bytes.
Json export_visualization(const Engine& engine, const std::string& instance_id, const std::string& format,
                          std::optional<TimestampMs> as_of = std::nullopt);

}  // namespace adr
