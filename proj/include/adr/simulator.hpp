#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "adr/model.hpp"
#include "adr/runtime.hpp"
#include "adr/sankey.hpp"

namespace adr {

// Probabilities in [0, 1]; 0 and 1 make the bit deterministic.
struct PhaseBehavior {
  double k = 1.0;
  double a = 1.0;
  double t = 1.0;
  double s = 1.0;
  double quit = 0.0;  // leaves as soon as the phase starts

  bool operator==(const PhaseBehavior&) const = default;
};

struct StudentProfile {
  std::string name;
  double default_question = 1.0;
  std::map<std::string, double> questions;
  PhaseBehavior default_phase;
  // Keyed by phase; 0 is the intro (only `quit` is used there).
  std::map<int, PhaseBehavior> phases;

  double question(const std::string& id) const;
  PhaseBehavior phase(int x) const;

  bool operator==(const StudentProfile&) const = default;
};

// {"profiles": [{"name", "questions": {"default"|id: p}, "phases": {"default"|x: {k,a,t,s,quit}}}]}
// Unknown phases or question ids and out-of-range probabilities are
// Error{kInvalidArgument}.
std::vector<StudentProfile> profiles_from_json(const Json& j, const TrainingDefinition& def);
std::vector<StudentProfile> load_profiles_file(const std::filesystem::path& path, const TrainingDefinition& def);

struct SimulatedStudent {
  std::string profile;
  std::string run_id;
  std::string user_ref;
  std::vector<int> tasks;  // assigned task per entered phase
  std::string terminal;    // "finished", "quit", "parked"
  int quit_phase = -1;
};

struct CohortOptions {
  int n_per_profile = 1;
  std::uint64_t seed = 0;
  // Close the instance at the end so quitters land on Quit nodes.
  bool close_instance = true;
  // Persist to this directory; in-memory when empty.
  std::filesystem::path store_dir;
  bool validate_definitions = true;
};

struct CohortResult {
  std::string instance_id;
  std::vector<SimulatedStudent> students;
  SankeyFlow flow;
};

// Drives every student through the runtime API in-process with a manual
// clock. Output depends only on the inputs and the seed.
CohortResult simulate_cohort(const TrainingDefinition& def, const std::vector<StudentProfile>& profiles,
                             const CohortOptions& options);
// Same, against a caller-owned engine (which must use a ManualClock).
CohortResult simulate_cohort(Engine& engine, ManualClock& clock, const TrainingDefinition& def,
                             const std::vector<StudentProfile>& profiles, const CohortOptions& options);

// One metric bit referenced by a phase's matrix, e.g. {kAlpha, 1} = a_1.
struct BitRef {
  Metric metric = Metric::kPi;
  int row = 0;

  std::string name() const;  // "p1", "k2", "a1", "t4", "s3"
  bool operator==(const BitRef&) const = default;
  auto operator<=>(const BitRef&) const = default;
};

// Bits whose value can matter for phase x; sigma weights and any k/a/t
// weight make the row's s bit referenced. Ordered by (row, metric).
std::vector<BitRef> referenced_bits(const Phase& phase, int x);

// Independent transcription of the performance and assignment formulas for
// one assignment of the referenced bits (bit j of `mask` is bits[j]).
int oracle_assign(const Phase& phase, int x, const std::vector<BitRef>& bits, std::uint64_t mask);

// Metric vectors with exactly the referenced bits set from `mask`.
MetricVectors vectors_for(int phases, const std::vector<BitRef>& bits, std::uint64_t mask);

struct PhaseReachability {
  int phase = 0;
  int task_count = 1;
  std::vector<BitRef> bits;
  bool exhaustive = true;
  std::uint64_t samples = 0;
  std::set<int> reachable;
  std::set<int> unreachable;
  std::map<int, std::map<std::string, bool>> witnesses;
  std::map<int, std::uint64_t> distribution;  // task -> assignments (or samples)
  std::map<std::string, bool> sensitive;      // bit -> flipping it can change y
  std::string error;                          // set when the phase cannot be decided
};

struct ReachabilityReport {
  std::vector<PhaseReachability> phases;
  std::vector<std::string> dead_weights;  // "W(x)[i].metric" whose bit never matters
  bool monte_carlo = false;
};

inline constexpr int kDefaultBitCap = 20;

// Throws Error{kCapExceeded} when a phase references more than `cap` bits.
ReachabilityReport enumerate_paths(const TrainingDefinition& def, int cap = kDefaultBitCap);
// Uniform random bits; sensitivity is estimated on the sampled points.
ReachabilityReport sample_paths(const TrainingDefinition& def, std::uint64_t samples, std::uint64_t seed);

struct AuditReport {
  ValidationReport validation;
  std::optional<ReachabilityReport> reachability;

  std::string to_text() const;
  Json to_json() const;
};

// Exhaustive within the cap, Monte-Carlo beyond it.
AuditReport audit_weights(const TrainingDefinition& def, int cap = kDefaultBitCap);

Json to_json(const ReachabilityReport& report);
std::string to_text(const ReachabilityReport& report);

}  // namespace adr
