#include "adr/tutor.hpp"

#include <algorithm>
#include <numeric>

#include "adr/error.hpp"

namespace adr {

MetricVectors::MetricVectors(int phases)
    : p_(static_cast<std::size_t>(phases)),
      k_(static_cast<std::size_t>(phases)),
      a_(static_cast<std::size_t>(phases)),
      t_(static_cast<std::size_t>(phases)),
      s_(static_cast<std::size_t>(phases)) {}

Bit MetricVectors::at(const std::vector<Bit>& v, int i) {
  if (i < 1 || i > static_cast<int>(v.size())) return std::nullopt;
  return v[static_cast<std::size_t>(i - 1)];
}

Bit& MetricVectors::slot(std::vector<Bit>& v, int i) {
  if (i < 1 || i > static_cast<int>(v.size())) {
    throw Error(ErrorCode::kInvalidArgument, "metric index " + std::to_string(i) + " out of range");
  }
  return v[static_cast<std::size_t>(i - 1)];
}

PerformanceScore PerformanceScore::reduced() const {
  const std::uint64_t g = std::gcd(numerator, denominator);
  if (g == 0) return *this;
  return {numerator / g, denominator / g};
}

std::string PerformanceScore::to_string() const {
  const PerformanceScore r = reduced();
  return std::to_string(r.numerator) + "/" + std::to_string(r.denominator);
}

PerformanceScore parse_performance(const std::string& text) {
  const Ratio r = parse_ratio(Json(text));
  if (r.den == 0 || r.num > r.den) throw Error(ErrorCode::kInvalidArgument, "performance out of range: " + text);
  return {r.num, r.den};
}

std::vector<Bit> evaluate_pretraining(const AssessmentSpec& assessment, const Answers& answers, int phases) {
  for (const auto& [id, value] : answers) {
    if (assessment.find_question(id) == nullptr) {
      throw Error(ErrorCode::kInvalidArgument, "answer references unknown question '" + id + "'", id);
    }
  }
  std::vector<Bit> p(static_cast<std::size_t>(phases));
  for (const auto& group : assessment.groups) {
    if (group.phase < 1 || group.phase > phases || group.questions.empty()) continue;
    std::uint64_t correct = 0;
    for (const auto& ref : group.questions) {
      const Question* q = assessment.find_question(ref);
      auto it = answers.find(ref);
      if (q != nullptr && it != answers.end() && q->is_correct(it->second)) ++correct;
    }
    const std::uint64_t size = group.questions.size();
    // correct / size >= num / den, cross-multiplied.
    p[static_cast<std::size_t>(group.phase - 1)] =
        correct * group.minimal_ratio.den >= group.minimal_ratio.num * size;
  }
  return p;
}

std::set<std::string> match_keywords(const std::vector<std::string>& required,
                                     const std::vector<std::string>& commands) {
  std::set<std::string> matched;
  for (const auto& kw : required) {
    for (const auto& cmd : commands) {
      if (cmd.find(kw) != std::string::npos) {
        matched.insert(kw);
        break;
      }
    }
  }
  return matched;
}

PhaseMetrics derive_phase_metrics(const PhaseMetricSpec& spec, const RunPhaseRecord& record) {
  PhaseMetrics m;
  m.k = std::all_of(spec.required_keywords.begin(), spec.required_keywords.end(),
                    [&](const std::string& kw) { return record.matched_keywords.count(kw) > 0; }) &&
        (!spec.max_commands || record.command_count <= *spec.max_commands);
  m.a = record.correct_answer_submitted &&
        (!spec.max_wrong_answers || record.wrong_answer_count <= *spec.max_wrong_answers);
  m.t = record.observed_time < spec.expected_time;
  m.s = !record.solution_displayed;
  return m;
}

namespace {

// Value of a metric bit under a weight. Unset under a zero weight is fine;
// unset under a non-zero weight is a definition or runtime bug.
std::uint64_t term(Bit bit, std::uint32_t weight, const char* name, int row) {
  if (weight == 0) return 0;
  if (!bit) {
    throw Error(ErrorCode::kUnsetMetric,
                std::string("metric ") + name + "_" + std::to_string(row) + " is unset under a non-zero weight");
  }
  return *bit ? weight : 0;
}

PerformanceScore evaluate(const DecisionMatrix& matrix, int x, const MetricVectors& v,
                          std::vector<RowContribution>* explanation) {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 0;
  for (const auto& [i, w] : matrix.rows) {
    if (i < 1 || i > x || w.is_zero()) continue;
    const std::uint64_t assessed = term(v.p(i), w.pi, "p", i);
    std::uint64_t bracket = 0;
    bool gated = false;
    if (w.kappa || w.alpha || w.theta || w.sigma) {
      const Bit s = v.s(i);
      if (!s) throw Error(ErrorCode::kUnsetMetric, "metric s_" + std::to_string(i) + " is unset under a non-zero weight");
      if (*s) {
        bracket = term(v.k(i), w.kappa, "k", i) + term(v.a(i), w.alpha, "a", i) +
                  term(v.t(i), w.theta, "t", i) + w.sigma;
      } else {
        gated = true;
      }
    }
    numerator += assessed + bracket;
    denominator += w.sum();
    if (explanation != nullptr) explanation->push_back({i, assessed + bracket, w.sum(), gated});
  }
  if (denominator == 0) {
    throw Error(ErrorCode::kZeroDenominator, "decision matrix of phase " + std::to_string(x) + " has no weight");
  }
  return {numerator, denominator};
}

}  // namespace

PerformanceScore performance(const DecisionMatrix& matrix, int x, const MetricVectors& v) {
  return evaluate(matrix, x, v, nullptr);
}

PerformanceScore performance(const TrainingDefinition& def, int x, const MetricVectors& v) {
  const Phase& phase = def.phase(x);
  if (!phase.matrix) {
    throw Error(ErrorCode::kZeroDenominator, "phase " + std::to_string(x) + " has no decision matrix");
  }
  return performance(*phase.matrix, x, v);
}

int assign_task(int task_count, const PerformanceScore& f) {
  if (task_count <= 1) return 1;
  if (f.numerator == 0) return task_count;
  // trunc(n (1 - f)) = n - ceil(n f) for 0 <= f <= 1, so no fraction is
  // ever materialised.
  const std::uint64_t n = static_cast<std::uint64_t>(task_count);
  const std::uint64_t num = std::min(f.numerator, f.denominator);
  const std::uint64_t ceil_nf = (n * num + f.denominator - 1) / f.denominator;
  const auto y = static_cast<int>(n - ceil_nf) + 1;
  return std::clamp(y, 1, task_count);
}

TaskAssignment decide(const TrainingDefinition& def, int x, const MetricVectors& v) {
  if (x < 1 || x > def.phase_count()) {
    throw Error(ErrorCode::kInvalidArgument, "phase " + std::to_string(x) + " does not exist");
  }
  const Phase& phase = def.phase(x);
  TaskAssignment out;
  out.phase = x;
  if (phase.task_count() <= 1) {
    out.task = 1;
    return out;
  }
  if (!phase.matrix) {
    throw Error(ErrorCode::kZeroDenominator, "phase " + std::to_string(x) + " has no decision matrix");
  }
  const PerformanceScore f = evaluate(*phase.matrix, x, v, &out.explanation);
  out.performance = f;
  out.task = assign_task(phase.task_count(), f);
  return out;
}

}  // namespace adr
