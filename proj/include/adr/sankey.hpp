#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "adr/events.hpp"
#include "adr/model.hpp"

namespace adr {

struct SankeyNode {
  std::string id;     // "Intro", "A", "P3T2", "Q", "End", "Quit(3)"
  int column = 0;     // 0 Intro, 1 A, x+1 for phase x, m+2 Q, m+3 End
  int phase = 0;      // training phase for task and quit nodes
  int task = 0;       // task order for task nodes
  std::uint64_t inbound = 0;
  std::uint64_t outbound = 0;  // excluding quits
  std::uint64_t quit = 0;
  std::uint64_t current = 0;   // students sitting at the node right now

  bool operator==(const SankeyNode&) const = default;
};

struct SankeyLink {
  std::string from;
  std::string to;
  std::uint64_t count = 0;

  bool operator==(const SankeyLink&) const = default;
};

struct SankeyFlow {
  std::vector<SankeyNode> nodes;
  std::vector<SankeyLink> links;
  std::uint64_t students = 0;
  std::map<int, std::uint64_t> phase_entrants;

  const SankeyNode* node(const std::string& id) const;
  std::uint64_t link(const std::string& from, const std::string& to) const;

  bool operator==(const SankeyFlow&) const = default;
};

std::string task_node_id(int phase, int task);
std::string quit_node_id(int phase);

// Folds runtime actions into transition counts. The live engine feeds it
// incrementally; analytics replays the store into a fresh one.
class SankeyBuilder {
 public:
  explicit SankeyBuilder(const TrainingDefinition& def);

  void on_action(const TrainingActionEvent& action);
  // Instance closed: every run still in progress quits where it stands.
  void on_close();

  SankeyFlow flow() const;

 private:
  void move(const std::string& run, const std::string& to);
  int quit_phase_of(const std::string& node) const;

  int phases_ = 0;
  std::vector<int> task_counts_;
  bool has_questionnaire_ = false;
  std::uint64_t students_ = 0;
  std::map<std::string, std::string> position_;
  std::map<std::pair<std::string, std::string>, std::uint64_t> links_;
  std::map<int, std::uint64_t> entrants_;
};

// Conservation violations (empty when the flow is consistent).
std::vector<std::string> check_conservation(const SankeyFlow& flow);

}  // namespace adr
