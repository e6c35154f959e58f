#include <gtest/gtest.h>

#include <random>

#include "adr/error.hpp"
#include "adr/tutor.hpp"
#include "test_util.hpp"

namespace adr {
namespace {

// Oracle: y = floor(n (den - num) / den) + 1, capped at n.
int oracle_y(int n, std::uint64_t num, std::uint64_t den) {
  if (n <= 1) return 1;
  const std::uint64_t y = (static_cast<std::uint64_t>(n) * (den - num)) / den + 1;
  return static_cast<int>(std::min<std::uint64_t>(y, static_cast<std::uint64_t>(n)));
}

struct Bits {
  bool p, k, a, t, s;
};

// Oracle for f: numerator and denominator summed row by row.
std::pair<std::uint64_t, std::uint64_t> oracle_f(const std::map<int, WeightRow>& rows, const std::map<int, Bits>& b) {
  std::uint64_t num = 0, den = 0;
  for (const auto& [i, w] : rows) {
    const Bits& v = b.at(i);
    den += w.pi + w.kappa + w.alpha + w.theta + w.sigma;
    num += v.p * w.pi;
    if (v.s) num += v.k * w.kappa + v.a * w.alpha + v.t * w.theta + w.sigma;
  }
  return {num, den};
}

MetricVectors to_vectors(int m, const std::map<int, Bits>& b) {
  MetricVectors v(m);
  for (const auto& [i, x] : b) {
    v.set_p(i, x.p);
    v.set_k(i, x.k);
    v.set_a(i, x.a);
    v.set_t(i, x.t);
    v.set_s(i, x.s);
  }
  return v;
}

TEST(TutorTest, AssignTaskExactCases) {
  EXPECT_EQ(assign_task(3, {0, 1}), 3);
  EXPECT_EQ(assign_task(3, {1, 1}), 1);
  EXPECT_EQ(assign_task(2, {2, 5}), 2);
  EXPECT_EQ(assign_task(2, {3, 5}), 1);
  EXPECT_EQ(assign_task(3, {2, 3}), 2);
  EXPECT_EQ(assign_task(1, {0, 1}), 1);
}

TEST(TutorTest, AssignTaskMatchesOracleOnAllSmallFractions) {
  for (int n = 1; n <= 8; ++n) {
    for (std::uint64_t den = 1; den <= 60; ++den) {
      for (std::uint64_t num = 0; num <= den; ++num) {
        ASSERT_EQ(assign_task(n, {num, den}), oracle_y(n, num, den)) << n << " " << num << "/" << den;
      }
    }
  }
}

TEST(TutorTest, AssignTaskBoundaryIsExactNotFloatingPoint) {
  // n f is an integer exactly at the thresholds; a float rounding here would shift y.
  EXPECT_EQ(assign_task(3, {1, 3}), 3);
  EXPECT_EQ(assign_task(3, {2, 6}), 3);
  EXPECT_EQ(assign_task(5, {3, 5}), 3);
  EXPECT_EQ(assign_task(10, {7, 10}), 4);
}

TEST(TutorTest, PerformanceSolutionGate) {
  DecisionMatrix w;
  w.rows[1] = {0, 1, 1, 1, 1};
  w.rows[2] = {1, 0, 0, 0, 0};
  MetricVectors v(2);
  v.set_p(2, true);
  v.set_k(1, true);
  v.set_a(1, true);
  v.set_t(1, true);
  v.set_s(1, false);
  const PerformanceScore f = performance(w, 2, v);
  EXPECT_EQ(f.numerator, 1u);
  EXPECT_EQ(f.denominator, 5u);
  v.set_s(1, true);
  EXPECT_TRUE(performance(w, 2, v).is_one());
}

TEST(TutorTest, UnsetMetricUnderWeightIsAnError) {
  DecisionMatrix w;
  w.rows[1] = {0, 0, 1, 0, 0};
  MetricVectors v(2);
  v.set_s(1, true);
  try {
    performance(w, 2, v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsetMetric);
  }
  // The same unset bit under a zero weight is fine.
  w.rows[1] = {0, 0, 0, 0, 1};
  EXPECT_TRUE(performance(w, 2, v).is_one());
}

TEST(TutorTest, ZeroDenominator) {
  DecisionMatrix w;
  w.rows[3] = {1, 0, 0, 0, 0};  // outside 1..x
  try {
    performance(w, 2, MetricVectors(3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroDenominator);
  }
}

TEST(TutorTest, DecideExplainsRows) {
  const TrainingDefinition def = testing::load_fixture("knowledge_base.json");
  MetricVectors v(7);
  for (int i = 1; i <= 7; ++i) {
    v.set_a(i, true);
    v.set_t(i, true);
    v.set_s(i, true);
  }
  v.set_a(1, false);
  v.set_t(4, false);
  const TaskAssignment d = decide(def, 7, v);
  EXPECT_EQ(d.task, 2);
  ASSERT_TRUE(d.performance);
  EXPECT_EQ(d.performance->to_string(), "2/5");
  ASSERT_EQ(d.explanation.size(), 2u);
  EXPECT_EQ(d.explanation[0].row, 1);
  EXPECT_EQ(d.explanation[0].earned, 2u);
  EXPECT_EQ(d.explanation[1].possible, 2u);
}

TEST(TutorTest, DecideSingleTaskPhaseNeedsNoMetrics) {
  const TrainingDefinition def = testing::load_fixture("knowledge_base.json");
  const TaskAssignment d = decide(def, 1, MetricVectors(7));
  EXPECT_EQ(d.task, 1);
  EXPECT_FALSE(d.performance);
  EXPECT_THROW(decide(def, 8, MetricVectors(7)), Error);
}

TEST(TutorTest, PretrainingEvaluation) {
  const TrainingDefinition def = testing::load_fixture("junior_hacker.json");
  Answers a = testing::all_correct(def.assessment);
  a["q2"] = {"1"};  // one of two in P1's group, ratio 1/2 still passes
  a["q6"] = {"tar"};  // P4 requires both
  const auto p = evaluate_pretraining(def.assessment, a, 5);
  ASSERT_EQ(p.size(), 5u);
  EXPECT_EQ(p[0], true);
  EXPECT_EQ(p[3], false);
  EXPECT_EQ(p[4], true);
  a["zzz"] = {"x"};
  EXPECT_THROW(evaluate_pretraining(def.assessment, a, 5), Error);
}

TEST(TutorTest, PretrainingLeavesUngroupedPhasesUnset) {
  const TrainingDefinition def = testing::load_fixture("knowledge_base.json");
  const auto p = evaluate_pretraining(def.assessment, {}, 7);
  EXPECT_FALSE(p[0].has_value());
  EXPECT_EQ(p[1], false);
  EXPECT_FALSE(p[6].has_value());
}

TEST(TutorTest, DerivePhaseMetrics) {
  PhaseMetricSpec spec;
  spec.expected_time = std::chrono::seconds(60);
  spec.required_keywords = {"nmap", "ssh"};
  spec.max_commands = 5;
  spec.max_wrong_answers = 1;
  RunPhaseRecord r;
  r.observed_time = std::chrono::seconds(59);
  r.correct_answer_submitted = true;
  r.wrong_answer_count = 1;
  r.command_count = 5;
  r.matched_keywords = {"nmap", "ssh"};
  EXPECT_EQ(derive_phase_metrics(spec, r), (PhaseMetrics{true, true, true, true}));
  r.observed_time = std::chrono::seconds(60);  // strictly less than expected
  r.wrong_answer_count = 2;
  r.command_count = 6;
  r.solution_displayed = true;
  EXPECT_EQ(derive_phase_metrics(spec, r), (PhaseMetrics{false, false, false, false}));
}

TEST(TutorTest, KeywordMatchingIsSubstring) {
  EXPECT_EQ(match_keywords({"nmap", "john", "ls"}, {"sudo nmap -sV x", "lsblk"}),
            (std::set<std::string>{"nmap", "ls"}));
}

TEST(TutorTest, PerformanceStringsRoundTrip) {
  const PerformanceScore f{6, 10};
  EXPECT_EQ(f.to_string(), "3/5");
  EXPECT_EQ(parse_performance("3/5"), f);
  EXPECT_THROW(parse_performance("6/5"), Error);
}

// Random matrices with weights in [0, 5]: decide agrees with the oracle,
// raising a bit never makes the task easier, scaling weights changes nothing.
TEST(TutorTest, RandomMatricesProperties) {
  std::mt19937_64 rng(12345);
  std::uniform_int_distribution<std::uint32_t> wd(0, 5);
  std::bernoulli_distribution coin(0.5);
  for (int iter = 0; iter < 3000; ++iter) {
    const int x = 1 + static_cast<int>(rng() % 5);
    const int n = 1 + static_cast<int>(rng() % 4);
    std::map<int, WeightRow> rows;
    for (int i = 1; i <= x; ++i) {
      WeightRow w{wd(rng), 0, 0, 0, 0};
      if (i < x) w = {wd(rng), wd(rng), wd(rng), wd(rng), wd(rng)};
      rows[i] = w;
    }
    std::uint64_t total = 0;
    for (auto& [i, w] : rows) total += w.sum();
    if (total == 0) rows[x].pi = 1;

    std::map<int, Bits> bits;
    for (int i = 1; i <= x; ++i) bits[i] = {coin(rng), coin(rng), coin(rng), coin(rng), coin(rng)};

    DecisionMatrix mat{rows};
    const auto [num, den] = oracle_f(rows, bits);
    const PerformanceScore f = performance(mat, x, to_vectors(x, bits));
    ASSERT_EQ(f.numerator, num);
    ASSERT_EQ(f.denominator, den);
    const int y = assign_task(n, f);
    ASSERT_EQ(y, oracle_y(n, num, den));

    for (int i = 1; i <= x; ++i) {
      for (bool Bits::*field : {&Bits::p, &Bits::k, &Bits::a, &Bits::t, &Bits::s}) {
        if (bits[i].*field) continue;
        auto raised = bits;
        raised[i].*field = true;
        ASSERT_LE(assign_task(n, performance(mat, x, to_vectors(x, raised))), y);
      }
    }

    const std::uint32_t c = 1 + static_cast<std::uint32_t>(rng() % 7);
    DecisionMatrix scaled = mat;
    for (auto& [i, w] : scaled.rows) {
      for (Metric m : kAllMetrics) w.set(m, w.get(m) * c);
    }
    ASSERT_EQ(assign_task(n, performance(scaled, x, to_vectors(x, bits))), y);
  }
}

}  // namespace
}  // namespace adr
