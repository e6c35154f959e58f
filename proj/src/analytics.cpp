#include "adr/analytics.hpp"

#include <algorithm>
#include <numeric>

#include "adr/error.hpp"

namespace adr {
namespace {

std::string fraction(std::uint64_t num, std::uint64_t den) {
  const std::uint64_t g = std::gcd(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

std::string terminal_of(const TrainingRun& run) {
  if (run.parked) return "parked";
  switch (run.state) {
    case RunState::kIntro:
    case RunState::kInPhase:
      return "in_progress";
    case RunState::kQuestionnaire:
      return "questionnaire";
    case RunState::kFinished:
      return "finished";
    case RunState::kAbandoned:
      return "abandoned";
  }
  return "in_progress";
}

}  // namespace

SankeyFlow replay_sankey(const TrainingDefinition& def, const EventStore& store, std::optional<TimestampMs> as_of,
                         std::optional<TimestampMs> closed_at) {
  SankeyBuilder builder(def);
  store.visit([&](const Envelope& env) {
    if (env.kind != EventKind::kAction) return;
    const TrainingActionEvent a = action_from_json(env.body);
    if (as_of && a.timestamp > *as_of) return;
    builder.on_action(a);
  });
  if (closed_at && (!as_of || *closed_at <= *as_of)) builder.on_close();
  return builder.flow();
}

SankeyFlow sankey(const Engine& engine, const std::string& instance_id, std::optional<TimestampMs> as_of) {
  const InstanceInfo info = engine.instance(instance_id);
  return replay_sankey(*engine.definition_of(instance_id), engine.store(instance_id), as_of, info.closed_at);
}

StudentPath student_path(const Engine& engine, const std::string& run_id) {
  const TrainingRun run = engine.run(run_id);
  const auto events = engine.query_events(run_id);
  const Timeline timeline = correlate(events);

  StudentPath path;
  path.run_id = run.run_id;
  path.user_ref = run.user_ref;
  path.terminal = terminal_of(run);
  std::map<int, PathEntry> by_phase;
  for (const auto& [x, w] : timeline.phases) {
    PathEntry e;
    e.phase = x;
    e.task = w.task;
    e.completed = w.complete.has_value();
    e.observed_time = w.observed_time();
    e.command_count = static_cast<int>(w.commands.size());
    by_phase[x] = e;
  }
  for (const auto& ev : events) {
    if (ev.is_command()) continue;
    const TrainingActionEvent& a = ev.action();
    if (a.external || !a.details.contains("phase")) continue;
    auto it = by_phase.find(a.details["phase"].get<int>());
    if (it == by_phase.end()) continue;
    PathEntry& e = it->second;
    switch (a.type) {
      case ActionType::kPhaseStarted:
        if (auto p = a.details.find("performance"); p != a.details.end()) {
          e.performance = parse_performance(p->get<std::string>());
        }
        e.manual = a.details.value("manual", false);
        break;
      case ActionType::kWrongAnswerSubmitted:
        ++e.wrong_answer_count;
        break;
      case ActionType::kSolutionDisplayed:
        e.solution_displayed = true;
        break;
      default:
        break;
    }
  }
  int prev = 0;
  for (auto& [x, e] : by_phase) {
    if (prev == 0) {
      e.direction = "start";
    } else if (e.task > prev) {
      e.direction = "down";
    } else if (e.task < prev) {
      e.direction = "up";
    } else {
      e.direction = "level";
    }
    prev = e.task;
    path.entries.push_back(e);
  }
  return path;
}

Describe describe(std::vector<std::uint64_t> values) {
  if (values.empty()) throw Error(ErrorCode::kEmpty, "no values to describe");
  std::sort(values.begin(), values.end());
  Describe d;
  d.count = values.size();
  d.min = values.front();
  d.max = values.back();
  d.total = std::accumulate(values.begin(), values.end(), std::uint64_t{0});
  const std::uint64_t g = std::gcd(d.total, static_cast<std::uint64_t>(d.count));
  d.mean_num = d.total / (g == 0 ? 1 : g);
  d.mean_den = d.count / (g == 0 ? 1 : g);
  d.mean_rounded = (2 * d.total + d.count) / (2 * d.count);
  const std::size_t mid = d.count / 2;
  if (d.count % 2 == 1) {
    d.median_num = values[mid];
    d.median_den = 1;
  } else {
    const std::uint64_t sum = values[mid - 1] + values[mid];
    d.median_num = sum % 2 == 0 ? sum / 2 : sum;
    d.median_den = sum % 2 == 0 ? 1 : 2;
  }
  return d;
}

RunStats summary_stats(const Engine& engine, const std::vector<std::string>& instance_ids) {
  RunStats stats;
  std::vector<std::uint64_t> actions;
  std::vector<std::uint64_t> commands;
  for (const auto& id : instance_ids) {
    for (const auto& run : engine.runs(id)) {
      if (run.state != RunState::kFinished && run.state != RunState::kAbandoned) continue;
      StudentCounts c;
      c.instance_id = id;
      c.run_id = run.run_id;
      c.user_ref = run.user_ref;
      for (const auto& ev : engine.query_events(run.run_id)) {
        if (ev.is_command()) {
          ++c.commands;
        } else {
          ++c.actions;
        }
      }
      actions.push_back(c.actions);
      commands.push_back(c.commands);
      stats.students.push_back(std::move(c));
    }
  }
  if (stats.students.empty()) throw Error(ErrorCode::kEmpty, "no finished or abandoned runs");
  stats.actions = describe(actions);
  stats.commands = describe(commands);
  return stats;
}

Json to_json(const SankeyFlow& flow) {
  Json nodes = Json::array();
  for (const auto& n : flow.nodes) {
    nodes.push_back({{"id", n.id},
                     {"column", n.column},
                     {"phase", n.phase},
                     {"task", n.task},
                     {"inbound", n.inbound},
                     {"outbound", n.outbound},
                     {"quit", n.quit},
                     {"current", n.current}});
  }
  Json links = Json::array();
  for (const auto& l : flow.links) links.push_back({{"from", l.from}, {"to", l.to}, {"count", l.count}});
  Json entrants = Json::object();
  for (const auto& [x, n] : flow.phase_entrants) entrants[std::to_string(x)] = n;
  return {{"nodes", nodes}, {"links", links}, {"students", flow.students}, {"phase_entrants", entrants}};
}

Json to_json(const StudentPath& path) {
  Json entries = Json::array();
  for (const auto& e : path.entries) {
    Json j = {{"phase", e.phase},
              {"task", e.task},
              {"node", task_node_id(e.phase, e.task)},
              {"completed", e.completed},
              {"observed_us", e.observed_time.count()},
              {"wrong_answer_count", e.wrong_answer_count},
              {"solution_displayed", e.solution_displayed},
              {"command_count", e.command_count},
              {"direction", e.direction}};
    if (e.performance) j["performance"] = e.performance->to_string();
    if (e.manual) j["manual"] = true;
    entries.push_back(std::move(j));
  }
  return {{"run_id", path.run_id}, {"user_ref", path.user_ref}, {"entries", entries}, {"terminal", path.terminal}};
}

Json to_json(const Describe& d) {
  return {{"count", d.count},
          {"min", d.min},
          {"max", d.max},
          {"total", d.total},
          {"mean", d.mean_rounded},
          {"mean_exact", fraction(d.mean_num, d.mean_den)},
          {"median", fraction(d.median_num, d.median_den)}};
}

Json to_json(const RunStats& stats) {
  Json students = Json::array();
  for (const auto& s : stats.students) {
    students.push_back({{"instance_id", s.instance_id},
                        {"run_id", s.run_id},
                        {"user_ref", s.user_ref},
                        {"actions", s.actions},
                        {"commands", s.commands}});
  }
  return {{"students", students}, {"actions", to_json(stats.actions)}, {"commands", to_json(stats.commands)}};
}

Json export_visualization(const Engine& engine, const std::string& instance_id, const std::string& format,
                          std::optional<TimestampMs> as_of) {
  Json doc = {{"schema", kExportSchema}, {"format", format}, {"instance_id", instance_id}};
  if (as_of) doc["as_of_ms"] = as_of->time_since_epoch().count();
  if (format == "sankey") {
    doc["data"] = to_json(sankey(engine, instance_id, as_of));
  } else if (format == "paths") {
    Json paths = Json::array();
    for (const auto& run : engine.runs(instance_id)) paths.push_back(to_json(student_path(engine, run.run_id)));
    doc["data"] = paths;
  } else if (format == "stats") {
    doc["data"] = to_json(summary_stats(engine, {instance_id}));
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown export format '" + format + "'",
                "expected one of sankey, paths, stats");
  }
  return doc;
}

}  // namespace adr
