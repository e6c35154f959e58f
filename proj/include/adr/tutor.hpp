#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "adr/model.hpp"

namespace adr {

// A binary metric that may not have been observed yet.
using Bit = std::optional<bool>;

// The p, k, a, t, s vectors. Phase indices are 1-based.
class MetricVectors {
 public:
  MetricVectors() = default;
  explicit MetricVectors(int phases);

  int phases() const { return static_cast<int>(p_.size()); }

  Bit p(int i) const { return at(p_, i); }
  Bit k(int i) const { return at(k_, i); }
  Bit a(int i) const { return at(a_, i); }
  Bit t(int i) const { return at(t_, i); }
  Bit s(int i) const { return at(s_, i); }

  void set_p(int i, Bit v) { slot(p_, i) = v; }
  void set_k(int i, Bit v) { slot(k_, i) = v; }
  void set_a(int i, Bit v) { slot(a_, i) = v; }
  void set_t(int i, Bit v) { slot(t_, i) = v; }
  void set_s(int i, Bit v) { slot(s_, i) = v; }

  bool operator==(const MetricVectors&) const = default;

 private:
  static Bit at(const std::vector<Bit>& v, int i);
  static Bit& slot(std::vector<Bit>& v, int i);

  std::vector<Bit> p_, k_, a_, t_, s_;
};

// Exact f(x) = numerator / denominator, always in [0, 1].
struct PerformanceScore {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 1;

  bool is_zero() const { return numerator == 0; }
  bool is_one() const { return numerator == denominator; }
  PerformanceScore reduced() const;
  std::string to_string() const;  // "num/den" in lowest terms

  friend bool operator==(const PerformanceScore& a, const PerformanceScore& b) {
    return a.numerator * b.denominator == b.numerator * a.denominator;
  }
  friend std::strong_ordering operator<=>(const PerformanceScore& a, const PerformanceScore& b) {
    return a.numerator * b.denominator <=> b.numerator * a.denominator;
  }
};

PerformanceScore parse_performance(const std::string& text);

// One row's share of the performance sums, for the instructor UI and audit logs.
struct RowContribution {
  int row = 0;
  std::uint64_t earned = 0;
  std::uint64_t possible = 0;
  bool solution_gated = false;  // s_i == 0 zeroed the k/a/t/sigma bracket
};

struct TaskAssignment {
  int phase = 0;
  int task = 1;
  std::optional<PerformanceScore> performance;  // empty for single-task phases
  std::vector<RowContribution> explanation;
};

// What the runtime observed in one phase; o_i lives here.
struct RunPhaseRecord {
  int phase = 0;
  int task = 1;
  std::chrono::microseconds observed_time{0};
  int wrong_answer_count = 0;
  bool correct_answer_submitted = false;
  bool solution_displayed = false;
  int command_count = 0;
  std::set<std::string> matched_keywords;

  bool operator==(const RunPhaseRecord&) const = default;
};

struct PhaseMetrics {
  bool k = false;
  bool a = false;
  bool t = false;
  bool s = false;

  bool operator==(const PhaseMetrics&) const = default;
};

// p_i for every phase 1..phases; phases without a question group stay unset.
// Throws Error{kInvalidArgument} for answers to unknown questions.
std::vector<Bit> evaluate_pretraining(const AssessmentSpec& assessment, const Answers& answers, int phases);

PhaseMetrics derive_phase_metrics(const PhaseMetricSpec& spec, const RunPhaseRecord& record);

// Keywords from `required` that occur as substrings of some command.
std::set<std::string> match_keywords(const std::vector<std::string>& required,
                                     const std::vector<std::string>& commands);

PerformanceScore performance(const DecisionMatrix& matrix, int x, const MetricVectors& v);
PerformanceScore performance(const TrainingDefinition& def, int x, const MetricVectors& v);

int assign_task(int task_count, const PerformanceScore& f);

TaskAssignment decide(const TrainingDefinition& def, int x, const MetricVectors& v);

}  // namespace adr
