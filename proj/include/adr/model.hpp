#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace adr {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

// Non-negative exact fraction. Not normalised; compare with operator<=>.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 1;

  friend bool operator==(const Ratio& a, const Ratio& b) {
    return a.num * b.den == b.num * a.den;
  }
};

Ratio parse_ratio(const Json& value);
Json ratio_to_json(const Ratio& r);

enum class QuestionKind { kMultipleChoice, kFreeText, kSelfAssessment };

std::string_view to_string(QuestionKind kind);

// One answer as submitted: a single string, a set of selected choices, or a
// scale level rendered as decimal text.
using AnswerValue = std::vector<std::string>;
using Answers = std::map<std::string, AnswerValue>;

Answers answers_from_json(const Json& j);
Json answers_to_json(const Answers& answers);

struct Question {
  std::string id;
  std::string text;
  QuestionKind kind = QuestionKind::kFreeText;
  std::vector<std::string> choices;
  std::vector<std::string> correct_choices;    // multiple-choice
  std::vector<std::string> accepted_answers;   // free-text
  bool case_sensitive = false;                 // free-text
  int scale_max = 0;                           // self-assessment, levels 1..scale_max
  std::vector<int> sufficient_levels;          // self-assessment

  bool is_correct(const AnswerValue& answer) const;

  bool operator==(const Question&) const = default;
};

struct QuestionGroup {
  int phase = 0;
  std::vector<std::string> questions;
  Ratio minimal_ratio{1, 1};

  bool operator==(const QuestionGroup&) const = default;
};

struct AssessmentSpec {
  std::vector<Question> questions;
  std::vector<QuestionGroup> groups;

  const Question* find_question(std::string_view id) const;
  const QuestionGroup* group_for(int phase) const;

  bool operator==(const AssessmentSpec&) const = default;
};

enum class Metric { kPi, kKappa, kAlpha, kTheta, kSigma };

inline constexpr Metric kAllMetrics[] = {Metric::kPi, Metric::kKappa, Metric::kAlpha,
                                         Metric::kTheta, Metric::kSigma};

std::string_view to_string(Metric metric);

struct WeightRow {
  std::uint32_t pi = 0;
  std::uint32_t kappa = 0;
  std::uint32_t alpha = 0;
  std::uint32_t theta = 0;
  std::uint32_t sigma = 0;

  std::uint32_t get(Metric m) const;
  void set(Metric m, std::uint32_t w);
  std::uint64_t sum() const {
    return std::uint64_t{pi} + kappa + alpha + theta + sigma;
  }
  bool is_zero() const { return sum() == 0; }

  bool operator==(const WeightRow&) const = default;
};

// W^(x): rows keyed by prior-phase index i.
struct DecisionMatrix {
  std::map<int, WeightRow> rows;

  WeightRow row(int i) const;
  // Sum of all weights in rows 1..x.
  std::uint64_t denominator(int x) const;

  bool operator==(const DecisionMatrix&) const = default;
};

struct PhaseMetricSpec {
  std::chrono::microseconds expected_time{0};
  std::vector<std::string> required_keywords;
  std::optional<int> max_commands;
  std::optional<int> max_wrong_answers;

  bool operator==(const PhaseMetricSpec&) const = default;
};

struct Task {
  std::string assignment;
  std::string solution;
  std::vector<std::string> correct_answers;
  bool case_sensitive = true;

  bool accepts(std::string_view answer) const;

  bool operator==(const Task&) const = default;
};

struct Phase {
  int index = 0;  // 1-based
  std::string title;
  std::vector<Task> tasks;  // position 1 is the hardest (base) task
  std::optional<DecisionMatrix> matrix;
  PhaseMetricSpec metric_spec;

  int task_count() const { return static_cast<int>(tasks.size()); }
  const Task& task(int y) const { return tasks.at(static_cast<std::size_t>(y - 1)); }

  bool operator==(const Phase&) const = default;
};

struct TrainingDefinition {
  int format_version = kFormatVersion;
  std::string id;
  int version = 1;
  std::string title;
  std::string intro;
  AssessmentSpec assessment;
  std::vector<Phase> phases;
  std::vector<Question> questionnaire;

  int phase_count() const { return static_cast<int>(phases.size()); }
  const Phase& phase(int x) const { return phases.at(static_cast<std::size_t>(x - 1)); }

  bool operator==(const TrainingDefinition&) const = default;
};

// Throws Error{kParseError} with line/column, or Error{kSchemaViolation}
// naming the offending JSON path.
TrainingDefinition parse_definition(std::string_view document);
TrainingDefinition definition_from_json(const Json& j);
TrainingDefinition load_definition_file(const std::filesystem::path& path);

Json to_json(const TrainingDefinition& def);
std::string serialize_definition(const TrainingDefinition& def);

struct Issue {
  std::string code;
  std::optional<int> phase;
  std::string message;

  bool operator==(const Issue&) const = default;
};

struct ValidationReport {
  std::vector<Issue> errors;
  std::vector<Issue> warnings;

  bool ok() const { return errors.empty(); }
  bool has_error(std::string_view code) const;
  bool has_warning(std::string_view code) const;
  Json to_json() const;
  std::string to_text() const;

  bool operator==(const ValidationReport&) const = default;
};

ValidationReport validate_definition(const TrainingDefinition& def);

}  // namespace adr
