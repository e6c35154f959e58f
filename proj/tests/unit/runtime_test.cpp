#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "adr/error.hpp"
#include "adr/runtime.hpp"
#include "test_util.hpp"

namespace adr {
namespace {

using testing::TempDir;
using testing::TestEngine;
using namespace std::chrono_literals;

struct Play {
  std::vector<std::string> commands;
  int wrong = 0;
  bool reveal = false;
  std::chrono::milliseconds duration = 1000ms;
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no adr::Error thrown";
  return ErrorCode::kStorageFailure;
}

// Plays the open phase: commands inside the window, then answers.
void play(TestEngine& te, const std::string& run_id, const Play& p) {
  const TrainingRun run = te->run(run_id);
  const TrainingDefinition& def = *te->definition_of(run.instance_id);
  const Task& task = def.phase(run.phase).task(run.task);
  int j = 1;
  for (const auto& c : p.commands) {
    CommandEvent e;
    e.timestamp = to_micros(te.clock->now()) + std::chrono::microseconds{j++};
    e.cmd = c;
    e.sandbox_uid = run.sandbox_uid;
    ASSERT_TRUE(te->route_command(e).has_value());
  }
  if (p.reveal) EXPECT_EQ(te->reveal_solution(run_id), task.solution);
  for (int w = 0; w < p.wrong; ++w) EXPECT_EQ(te->submit_answer(run_id, "definitely wrong"), Verdict::kWrong);
  te.clock->advance(p.duration);
  EXPECT_EQ(te->submit_answer(run_id, task.correct_answers.front()), Verdict::kCorrect);
}

class RuntimeTest : public ::testing::Test {
 protected:
  TrainingDefinition kb_ = testing::load_fixture("knowledge_base.json");
  TrainingDefinition jh_ = testing::load_fixture("junior_hacker.json");
};

TEST_F(RuntimeTest, HighPerformerStaysOnBaseTasks) {
  TestEngine te;
  const InstanceInfo inst = te->create_instance(kb_, 5);
  const TrainingRun r = te->join(inst.access_token, "alice");
  EXPECT_EQ(r.state, RunState::kIntro);
  const TaskAssignment first = te->submit_assessment(r.run_id, testing::all_correct(kb_.assessment));
  EXPECT_EQ(first.phase, 1);
  EXPECT_EQ(first.task, 1);
  for (int x = 1; x <= 7; ++x) {
    EXPECT_EQ(te->run(r.run_id).phase, x);
    EXPECT_EQ(te->run(r.run_id).task, 1) << "phase " << x;
    play(te, r.run_id, {});
    const AdvanceResult res = te->advance(r.run_id);
    if (x < 7) {
      ASSERT_EQ(res.kind, AdvanceResult::Kind::kAssignment);
      EXPECT_EQ(res.assignment->task, 1);
    } else {
      EXPECT_EQ(res.kind, AdvanceResult::Kind::kQuestionnaire);
    }
  }
  EXPECT_EQ(te->run(r.run_id).state, RunState::kQuestionnaire);
  te->submit_questionnaire(r.run_id, Json{{"s1", 5}, {"s2", 1}});
  const TrainingRun done = te->run(r.run_id);
  EXPECT_EQ(done.state, RunState::kFinished);
  EXPECT_EQ(done.questionnaire_unanswered, (std::vector<std::string>{"s3", "s4", "s5", "s6"}));
  EXPECT_EQ(done.assignments.size(), 7u);
  EXPECT_EQ(done.metrics.t(7), true);
}

TEST_F(RuntimeTest, LowPerformerDropsToVariantTasks) {
  TestEngine te;
  const InstanceInfo inst = te->create_instance(kb_, 5);
  const TrainingRun r = te->join(inst.access_token, "bob");
  te->submit_assessment(r.run_id, testing::all_wrong(kb_.assessment));
  std::vector<int> tasks;
  for (int x = 1; x <= 7; ++x) {
    tasks.push_back(te->run(r.run_id).task);
    play(te, r.run_id, {.reveal = true});
    te->advance(r.run_id);
  }
  EXPECT_EQ(tasks, (std::vector<int>{1, 2, 2, 2, 2, 2, 2}));
}

TEST_F(RuntimeTest, PhaseSevenUsesObservedTime) {
  // Slow in phase 4 and too many wrong answers in phase 1: f = 2/5 -> task 2.
  TestEngine te;
  const InstanceInfo inst = te->create_instance(kb_, 1);
  const TrainingRun r = te->join(inst.access_token, "carol");
  te->submit_assessment(r.run_id, testing::all_correct(kb_.assessment));
  for (int x = 1; x <= 6; ++x) {
    Play p;
    if (x == 1) p.wrong = 4;
    if (x == 4) p.duration = 600s;
    play(te, r.run_id, p);
    te->advance(r.run_id);
  }
  const TrainingRun run = te->run(r.run_id);
  EXPECT_EQ(run.phase, 7);
  EXPECT_EQ(run.task, 2);
  ASSERT_TRUE(run.assignments.back().performance);
  EXPECT_EQ(run.assignments.back().performance->to_string(), "2/5");
  EXPECT_EQ(run.metrics.a(1), false);
  EXPECT_EQ(run.metrics.t(4), false);
  EXPECT_EQ(run.records.at(4).observed_time, std::chrono::microseconds{600'000'000});
}

TEST_F(RuntimeTest, KeywordsComeFromSandboxCommands) {
  TestEngine te;
  const InstanceInfo inst = te->create_instance(jh_, 2);
  const TrainingRun a = te->join(inst.access_token, "a");
  const TrainingRun b = te->join(inst.access_token, "b");
  te->submit_assessment(a.run_id, testing::all_correct(jh_.assessment));
  te->submit_assessment(b.run_id, testing::all_correct(jh_.assessment));
  play(te, a.run_id, {.commands = {"ls -la", "cat flag.txt"}});
  play(te, b.run_id, {.commands = {"ls"}});
  te->advance(a.run_id);
  te->advance(b.run_id);
  EXPECT_EQ(te->run(a.run_id).metrics.k(1), true);
  EXPECT_EQ(te->run(b.run_id).metrics.k(1), false);
  EXPECT_EQ(te->run(a.run_id).records.at(1).command_count, 2);
  // P2 weighs p2, k1, t1 and s1; 3/4 with three tasks still lands on the base task.
  EXPECT_EQ(te->run(a.run_id).assignments.back().performance->to_string(), "1/1");
  EXPECT_EQ(te->run(b.run_id).assignments.back().performance->to_string(), "3/4");
  EXPECT_EQ(te->run(b.run_id).task, 1);
}

TEST_F(RuntimeTest, JoinErrors) {
  TestEngine te;
  const InstanceInfo inst = te->create_instance(kb_, 2);
  EXPECT_EQ(code_of([&] { te->join("nope", "u"); }), ErrorCode::kBadToken);
  EXPECT_EQ(code_of([&] { te->join(inst.access_token, ""); }), ErrorCode::kInvalidArgument);
  const TrainingRun a = te->join(inst.access_token, "a");
  EXPECT_EQ(te->join(inst.access_token, "a").run_id, a.run_id);  // resume
  te->join(inst.access_token, "b");
  EXPECT_EQ(code_of([&] { te->join(inst.access_token, "c"); }), ErrorCode::kCapacityExhausted);
  te->close_instance(inst.id);
  EXPECT_EQ(code_of([&] { te->join(inst.access_token, "a"); }), ErrorCode::kWrongState);
  EXPECT_EQ(te->run(a.run_id).state, RunState::kAbandoned);
  EXPECT_EQ(code_of([&] { te->close_instance(inst.id); }), ErrorCode::kWrongState);
}

TEST_F(RuntimeTest, FinishedUserCannotRejoin) {
  TestEngine te;
  const TrainingDefinition def = testing::load_fixture("minimal.json");
  const InstanceInfo inst = te->create_instance(def, 3);
  const TrainingRun r = te->join(inst.access_token, "u");
  te->submit_assessment(r.run_id, {});
  play(te, r.run_id, {});
  EXPECT_EQ(te->advance(r.run_id).kind, AdvanceResult::Kind::kFinished);
  EXPECT_EQ(code_of([&] { te->join(inst.access_token, "u"); }), ErrorCode::kDuplicateUser);
}

TEST_F(RuntimeTest, WrongStateTransitions) {
  TestEngine te;
  const InstanceInfo inst = te->create_instance(kb_, 1);
  const TrainingRun r = te->join(inst.access_token, "u");
  const auto id = r.run_id;
  EXPECT_EQ(code_of([&] { te->advance(id); }), ErrorCode::kWrongState);
  EXPECT_EQ(code_of([&] { te->submit_answer(id, "x"); }), ErrorCode::kWrongState);
  EXPECT_EQ(code_of([&] { te->reveal_solution(id); }), ErrorCode::kWrongState);
  EXPECT_EQ(code_of([&] { te->submit_questionnaire(id, Json::object()); }), ErrorCode::kWrongState);
  EXPECT_EQ(code_of([&] { te->submit_assessment(id, {{"zz", {"x"}}}); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(te->run(id).action_count, 1u);  // nothing recorded by the failures
  te->submit_assessment(id, {});
  EXPECT_EQ(code_of([&] { te->submit_assessment(id, {}); }), ErrorCode::kWrongState);
  EXPECT_EQ(code_of([&] { te->advance(id); }), ErrorCode::kWrongState);  // phase open
  EXPECT_EQ(code_of([&] { te->submit_answer(id, "  "); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { te->assign_manually(id, 1); }), ErrorCode::kWrongState);
  EXPECT_EQ(code_of([&] { te->run("404"); }), ErrorCode::kNotFound);
}

TEST_F(RuntimeTest, InvalidDefinitionRefused) {
  TestEngine te;
  const TrainingDefinition bad = testing::load_fixture("zero_denominator.json");
  EXPECT_EQ(code_of([&] { te->create_instance(bad, 1); }), ErrorCode::kInvalidDefinition);
  EXPECT_EQ(code_of([&] { te->create_instance(kb_, 0); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] { te->create_instance("unknown", 1); }), ErrorCode::kNotFound);
}

TEST_F(RuntimeTest, DefinitionVersions) {
  TestEngine te;
  te->register_definition(kb_);
  te->register_definition(kb_);
  TrainingDefinition changed = kb_;
  changed.title = "changed";
  EXPECT_EQ(code_of([&] { te->register_definition(changed); }), ErrorCode::kVersionConflict);
  changed.version = 2;
  te->register_definition(changed);
  EXPECT_EQ(te->find_definition(kb_.id)->title, "changed");
  EXPECT_EQ(te->create_instance(kb_.id, 1).definition_version, 2);
}

TEST_F(RuntimeTest, ParkingAndManualAssignment) {
  EngineOptions o;
  auto clock = std::make_shared<ManualClock>(testing::ms(1000));
  o.clock = clock;
  o.validate_definitions = false;
  Engine engine(o);
  const TrainingDefinition bad = testing::load_fixture("zero_denominator.json");
  const InstanceInfo inst = engine.create_instance(bad, 1);
  const TrainingRun r = engine.join(inst.access_token, "u");
  engine.submit_assessment(r.run_id, {});
  EXPECT_EQ(engine.submit_answer(r.run_id, "f"), Verdict::kCorrect);
  EXPECT_EQ(code_of([&] { engine.advance(r.run_id); }), ErrorCode::kDecisionFailed);
  EXPECT_TRUE(engine.run(r.run_id).parked);
  const auto alerts = engine.alerts(inst.id);
  ASSERT_EQ(alerts.size(), 1u);
  EXPECT_EQ(alerts[0].kind, "parked");
  EXPECT_EQ(alerts[0].phase, 2);
  EXPECT_EQ(code_of([&] { engine.assign_manually(r.run_id, 3); }), ErrorCode::kInvalidArgument);
  const TaskAssignment a = engine.assign_manually(r.run_id, 2);
  EXPECT_EQ(a.task, 2);
  const TrainingRun after = engine.run(r.run_id);
  EXPECT_FALSE(after.parked);
  EXPECT_EQ(after.phase, 2);
  EXPECT_TRUE(after.assignments.back().manual);
  EXPECT_TRUE(engine.alerts(inst.id).empty());
}

TEST_F(RuntimeTest, StrugglingAlert) {
  TestEngine te;
  const InstanceInfo inst = te->create_instance(kb_, 1);
  const TrainingRun r = te->join(inst.access_token, "u");
  te->submit_assessment(r.run_id, testing::all_wrong(kb_.assessment));
  play(te, r.run_id, {.reveal = true});
  te->advance(r.run_id);
  ASSERT_EQ(te->run(r.run_id).task, 2);
  te->reveal_solution(r.run_id);
  const auto alerts = te->alerts(inst.id);
  ASSERT_EQ(alerts.size(), 1u);
  EXPECT_EQ(alerts[0].kind, "struggling");
}

TEST_F(RuntimeTest, ExternalActionsDoNotDriveState) {
  TestEngine te;
  const InstanceInfo inst = te->create_instance(kb_, 1);
  const TrainingRun r = te->join(inst.access_token, "u");
  TrainingActionEvent e;
  e.run_id = r.run_id;
  e.type = ActionType::kTrainingFinished;
  e.timestamp = te.clock->now();
  te->ingest_external_action(e);
  EXPECT_EQ(te->run(r.run_id).state, RunState::kIntro);
  EXPECT_EQ(te->store(inst.id).size(), 2u);
}

TEST_F(RuntimeTest, UnroutableCommand) {
  TestEngine te;
  CommandEvent e;
  e.sandbox_uid = 999;
  EXPECT_FALSE(te->route_command(e).has_value());
}

// Drives random API calls; each call either succeeds with a legal state
// change or throws without recording anything.
TEST_F(RuntimeTest, RandomCallSequencesStayInsideTheGraph) {
  std::mt19937_64 rng(99);
  for (int round = 0; round < 30; ++round) {
    TestEngine te;
    const InstanceInfo inst = te->create_instance(jh_, 4);
    std::vector<std::string> ids;
    for (int u = 0; u < 3; ++u) ids.push_back(te->join(inst.access_token, "u" + std::to_string(u)).run_id);
    for (int step = 0; step < 200; ++step) {
      const std::string& id = ids[rng() % ids.size()];
      const TrainingRun before = te->run(id);
      const std::size_t store_before = te->store(inst.id).size();
      const int op = static_cast<int>(rng() % 6);
      bool ok = true;
      try {
        switch (op) {
          case 0: te->submit_assessment(id, rng() % 2 ? testing::all_correct(jh_.assessment) : Answers{}); break;
          case 1: te->submit_answer(id, rng() % 2 ? "jh-flag-" + std::to_string(before.phase) : "nope"); break;
          case 2: te->reveal_solution(id); break;
          case 3: te->advance(id); break;
          case 4: te->submit_questionnaire(id, Json::object()); break;
          case 5: te.clock->advance(std::chrono::milliseconds(rng() % 2'000'000)); continue;
        }
      } catch (const Error& e) {
        ok = false;
        ASSERT_EQ(e.code(), ErrorCode::kWrongState) << e.what();
      }
      const TrainingRun after = te->run(id);
      if (!ok) {
        ASSERT_EQ(after, before);
        ASSERT_EQ(te->store(inst.id).size(), store_before);
        continue;
      }
      // Allowed edges of the graph.
      const auto s0 = before.state, s1 = after.state;
      const bool legal = (s0 == s1 && (s0 != RunState::kInPhase || after.phase == before.phase)) ||
                         (s0 == RunState::kIntro && s1 == RunState::kInPhase && after.phase == 1) ||
                         (s0 == RunState::kInPhase && s1 == RunState::kInPhase && after.phase == before.phase + 1) ||
                         (s0 == RunState::kInPhase && s1 == RunState::kQuestionnaire && before.phase == 5) ||
                         (s0 == RunState::kQuestionnaire && s1 == RunState::kFinished);
      ASSERT_TRUE(legal) << to_string(s0) << " -> " << to_string(s1);
      if (s1 == RunState::kInPhase) {
        ASSERT_GE(after.task, 1);
        ASSERT_LE(after.task, 3);
      }
    }
  }
}

TEST_F(RuntimeTest, ReplayRebuildsIdenticalState) {
  TempDir dir;
  std::vector<TrainingRun> before;
  std::vector<InstanceInfo> infos;
  SankeyFlow flow;
  std::string open_id;
  {
    TestEngine te(dir.path());
    const InstanceInfo a = te->create_instance(kb_, 4);
    const InstanceInfo b = te->create_instance(jh_, 4);
    open_id = b.id;
    for (int u = 0; u < 3; ++u) {
      const auto r = te->join(a.access_token, "a" + std::to_string(u));
      te->submit_assessment(r.run_id, u % 2 ? testing::all_correct(kb_.assessment) : Answers{});
      for (int x = 0; x < u + 1; ++x) {
        play(te, r.run_id, {.commands = {"ls"}, .wrong = u, .reveal = u == 2});
        te->advance(r.run_id);
      }
    }
    te->close_instance(a.id);
    const auto r = te->join(b.access_token, "b0");
    te->submit_assessment(r.run_id, testing::all_correct(jh_.assessment));
    play(te, r.run_id, {.commands = {"ls", "cat x"}});
    for (const auto& i : te->instances()) {
      for (const auto& run : te->runs(i.id)) before.push_back(run);
    }
    infos = te->instances();
    flow = te->live_sankey(a.id);
  }
  TestEngine te(dir.path());
  std::vector<TrainingRun> after;
  for (const auto& i : te->instances()) {
    for (const auto& run : te->runs(i.id)) after.push_back(run);
  }
  EXPECT_EQ(after, before);
  EXPECT_EQ(te->instances(), infos);
  EXPECT_EQ(te->live_sankey(infos[0].id), flow);
  // Counters continue after recovery.
  const auto fresh = te->join(infos[1].access_token, "b1");
  EXPECT_GT(std::stoll(fresh.run_id), std::stoll(before.back().run_id));
  EXPECT_GT(fresh.sandbox_uid, before.back().sandbox_uid);
  const auto next = te->create_instance(kb_, 1);
  EXPECT_NE(next.id, infos[0].id);
  EXPECT_NE(next.id, infos[1].id);
  te->advance(before.back().run_id);
  EXPECT_EQ(te->run(before.back().run_id).phase, 2);
}

TEST_F(RuntimeTest, ConcurrentStudents) {
  TestEngine te;
  const InstanceInfo inst = te->create_instance(kb_, 64);
  std::vector<std::thread> threads;
  std::atomic<int> finished{0};
  for (int t = 0; t < 16; ++t) {
    threads.emplace_back([&, t] {
      const auto r = te->join(inst.access_token, "u" + std::to_string(t));
      te->submit_assessment(r.run_id, testing::all_correct(kb_.assessment));
      while (true) {
        const TrainingRun run = te->run(r.run_id);
        if (run.state != RunState::kInPhase) break;
        te->submit_answer(r.run_id, "kb-flag-" + std::to_string(run.phase));
        te->advance(r.run_id);
      }
      te->submit_questionnaire(r.run_id, Json::object());
      ++finished;
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(finished.load(), 16);
  const SankeyFlow flow = te->live_sankey(inst.id);
  EXPECT_EQ(flow.students, 16u);
  EXPECT_EQ(flow.link("Q", "End"), 16u);
  for (const auto& run : te->runs(inst.id)) EXPECT_EQ(run.action_count, 2u + 7 * 3 + 2);
}

TEST_F(RuntimeTest, ConcurrentJoinRespectsCapacity) {
  TestEngine te;
  const InstanceInfo inst = te->create_instance(kb_, 10);
  std::atomic<int> ok{0}, full{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < 32; ++t) {
    threads.emplace_back([&, t] {
      try {
        te->join(inst.access_token, "u" + std::to_string(t));
        ++ok;
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kCapacityExhausted) ++full;
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(ok.load(), 10);
  EXPECT_EQ(full.load(), 22);
}

TEST_F(RuntimeTest, JsonViews) {
  TestEngine te;
  const InstanceInfo inst = te->create_instance(kb_, 1);
  EXPECT_FALSE(to_json(inst).contains("access_token"));
  EXPECT_EQ(to_json(inst, true).at("access_token"), inst.access_token);
  const auto r = te->join(inst.access_token, "u");
  const Json j = to_json(te->run(r.run_id));
  EXPECT_EQ(j.at("state"), "intro");
  EXPECT_EQ(j.at("run_id"), r.run_id);
}

}  // namespace
}  // namespace adr
