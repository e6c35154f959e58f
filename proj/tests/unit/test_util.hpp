#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "adr/model.hpp"
#include "adr/runtime.hpp"

namespace adr::testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(ADR_FIXTURE_DIR) / name;
}

inline TrainingDefinition load_fixture(const std::string& name) {
  return load_definition_file(fixture(name));
}

inline TimestampMs ms(std::int64_t v) { return TimestampMs{std::chrono::milliseconds{v}}; }

// Unique scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("adr-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct TestEngine {
  std::shared_ptr<ManualClock> clock = std::make_shared<ManualClock>(ms(1'700'000'000'000));
  std::unique_ptr<Engine> engine;

  explicit TestEngine(std::filesystem::path store = {}) {
    EngineOptions o;
    o.store_dir = std::move(store);
    o.clock = clock;
    engine = std::make_unique<Engine>(std::move(o));
  }
  Engine* operator->() { return engine.get(); }
  Engine& operator*() { return *engine; }
};

// Every assessment answer correct.
inline Answers all_correct(const AssessmentSpec& a) {
  Answers out;
  for (const auto& q : a.questions) {
    switch (q.kind) {
      case QuestionKind::kMultipleChoice: out[q.id] = q.correct_choices; break;
      case QuestionKind::kFreeText: out[q.id] = {q.accepted_answers.front()}; break;
      case QuestionKind::kSelfAssessment: out[q.id] = {std::to_string(q.sufficient_levels.back())}; break;
    }
  }
  return out;
}

inline Answers all_wrong(const AssessmentSpec& a) {
  Answers out;
  for (const auto& q : a.questions) out[q.id] = {"no idea"};
  return out;
}

}  // namespace adr::testing
