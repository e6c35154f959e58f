#include "adr/sankey.hpp"

#include <algorithm>

namespace adr {

std::string task_node_id(int phase, int task) { return "P" + std::to_string(phase) + "T" + std::to_string(task); }

std::string quit_node_id(int phase) { return "Quit(" + std::to_string(phase) + ")"; }

const SankeyNode* SankeyFlow::node(const std::string& id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

std::uint64_t SankeyFlow::link(const std::string& from, const std::string& to) const {
  for (const auto& l : links) {
    if (l.from == from && l.to == to) return l.count;
  }
  return 0;
}

SankeyBuilder::SankeyBuilder(const TrainingDefinition& def)
    : phases_(def.phase_count()), has_questionnaire_(!def.questionnaire.empty()) {
  for (const auto& p : def.phases) task_counts_.push_back(p.task_count());
}

void SankeyBuilder::move(const std::string& run, const std::string& to) {
  auto it = position_.find(run);
  if (it == position_.end()) return;
  ++links_[{it->second, to}];
  if (to == "End" || to.rfind("Quit(", 0) == 0) {
    position_.erase(it);
  } else {
    it->second = to;
  }
}

int SankeyBuilder::quit_phase_of(const std::string& node) const {
  if (node == "Intro" || node == "A") return 0;
  if (node == "Q") return phases_ + 1;
  // "P<x>T<y>"
  const auto t = node.find('T');
  return std::stoi(node.substr(1, t - 1));
}

void SankeyBuilder::on_action(const TrainingActionEvent& a) {
  if (a.external) return;
  switch (a.type) {
    case ActionType::kTrainingStarted:
      if (position_.emplace(a.run_id, "Intro").second) ++students_;
      break;
    case ActionType::kAssessmentSubmitted:
      move(a.run_id, "A");
      break;
    case ActionType::kPhaseStarted:
      if (a.details.contains("phase")) {
        const int x = a.details["phase"].get<int>();
        ++entrants_[x];
        move(a.run_id, task_node_id(x, a.details.value("task", 1)));
      } else {
        move(a.run_id, "Q");
      }
      break;
    case ActionType::kTrainingFinished:
      move(a.run_id, "End");
      break;
    default:
      break;
  }
}

void SankeyBuilder::on_close() {
  std::vector<std::pair<std::string, std::string>> open(position_.begin(), position_.end());
  for (const auto& [run, node] : open) move(run, quit_node_id(quit_phase_of(node)));
}

SankeyFlow SankeyBuilder::flow() const {
  SankeyFlow f;
  f.students = students_;
  f.phase_entrants = entrants_;
  const int m = phases_;
  auto add = [&](std::string id, int column, int phase, int task) {
    SankeyNode n;
    n.id = std::move(id);
    n.column = column;
    n.phase = phase;
    n.task = task;
    f.nodes.push_back(std::move(n));
  };
  add("Intro", 0, 0, 0);
  add("A", 1, 0, 0);
  for (int x = 1; x <= m; ++x) {
    for (int y = 1; y <= task_counts_[static_cast<std::size_t>(x - 1)]; ++y) add(task_node_id(x, y), x + 1, x, y);
  }
  if (has_questionnaire_) add("Q", m + 2, 0, 0);
  add("End", m + 3, 0, 0);
  for (int x = 0; x <= m + (has_questionnaire_ ? 1 : 0); ++x) add(quit_node_id(x), -1, x, 0);

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < f.nodes.size(); ++i) index[f.nodes[i].id] = i;

  for (const auto& [key, count] : links_) {
    const auto& [from, to] = key;
    f.links.push_back({from, to, count});
    auto fi = index.find(from);
    auto ti = index.find(to);
    if (fi != index.end()) {
      if (to.rfind("Quit(", 0) == 0) {
        f.nodes[fi->second].quit += count;
      } else {
        f.nodes[fi->second].outbound += count;
      }
    }
    if (ti != index.end()) f.nodes[ti->second].inbound += count;
  }
  f.nodes[index["Intro"]].inbound = students_;
  for (const auto& [run, node] : position_) {
    if (auto it = index.find(node); it != index.end()) ++f.nodes[it->second].current;
  }
  auto rank = [&](const std::string& id) {
    auto it = index.find(id);
    return it == index.end() ? f.nodes.size() : it->second;
  };
  std::sort(f.links.begin(), f.links.end(), [&](const SankeyLink& a, const SankeyLink& b) {
    return std::pair(rank(a.from), rank(a.to)) < std::pair(rank(b.from), rank(b.to));
  });
  return f;
}

std::vector<std::string> check_conservation(const SankeyFlow& flow) {
  std::vector<std::string> violations;
  for (const auto& n : flow.nodes) {
    const bool sink = n.id == "End" || n.id.rfind("Quit(", 0) == 0;
    if (sink) {
      if (n.outbound != 0 || n.quit != 0 || n.current != 0) violations.push_back(n.id + ": sink has outflow");
      continue;
    }
    if (n.inbound != n.outbound + n.quit + n.current) {
      violations.push_back(n.id + ": inbound " + std::to_string(n.inbound) + " != outbound " +
                           std::to_string(n.outbound) + " + quit " + std::to_string(n.quit) + " + current " +
                           std::to_string(n.current));
    }
  }
  std::map<int, std::uint64_t> column_totals;
  for (const auto& n : flow.nodes) {
    if (n.task > 0) column_totals[n.phase] += n.inbound;
  }
  for (const auto& [x, total] : column_totals) {
    auto it = flow.phase_entrants.find(x);
    const std::uint64_t entrants = it == flow.phase_entrants.end() ? 0 : it->second;
    if (total != entrants) {
      violations.push_back("phase " + std::to_string(x) + ": task nodes hold " + std::to_string(total) +
                           " students but " + std::to_string(entrants) + " entered");
    }
  }
  return violations;
}

}  // namespace adr
