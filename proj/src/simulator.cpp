#include "adr/simulator.hpp"

#include <fstream>
#include <random>
#include <sstream>

#include "adr/error.hpp"

namespace adr {
namespace {

double probability(const Json& v, const std::string& where) {
  if (!v.is_number()) throw Error(ErrorCode::kInvalidArgument, where + ": probability must be a number");
  const double p = v.get<double>();
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kInvalidArgument, where + ": probability must be in [0, 1]");
  return p;
}

PhaseBehavior behavior_from_json(const Json& j, PhaseBehavior base, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    const std::string at = where + "." + key;
    if (key == "k") {
      base.k = probability(value, at);
    } else if (key == "a") {
      base.a = probability(value, at);
    } else if (key == "t") {
      base.t = probability(value, at);
    } else if (key == "s") {
      base.s = probability(value, at);
    } else if (key == "quit") {
      base.quit = probability(value, at);
    } else {
      throw Error(ErrorCode::kInvalidArgument, at + ": unknown behaviour key");
    }
  }
  return base;
}

AnswerValue correct_answer(const Question& q) {
  switch (q.kind) {
    case QuestionKind::kMultipleChoice:
      return q.correct_choices;
    case QuestionKind::kFreeText:
      return {q.accepted_answers.empty() ? std::string() : q.accepted_answers.front()};
    case QuestionKind::kSelfAssessment:
      return {std::to_string(q.sufficient_levels.empty() ? q.scale_max : q.sufficient_levels.front())};
  }
  return {};
}

AnswerValue wrong_answer(const Question& q) {
  switch (q.kind) {
    case QuestionKind::kMultipleChoice:
      return {};
    case QuestionKind::kFreeText:
      return {""};
    case QuestionKind::kSelfAssessment:
      for (int level = 1; level <= q.scale_max; ++level) {
        if (std::find(q.sufficient_levels.begin(), q.sufficient_levels.end(), level) == q.sufficient_levels.end()) {
          return {std::to_string(level)};
        }
      }
      return {"0"};
  }
  return {};
}

std::string wrong_flag(const Task& task) {
  std::string candidate = "wrong";
  while (task.accepts(candidate)) candidate += "!";
  return candidate;
}

std::uint64_t weight_of(const WeightRow& w, Metric m) { return w.get(m); }

int bit_value(const std::vector<BitRef>& bits, std::uint64_t mask, Metric m, int row) {
  for (std::size_t j = 0; j < bits.size(); ++j) {
    if (bits[j].metric == m && bits[j].row == row) return static_cast<int>((mask >> j) & 1U);
  }
  return 0;
}

std::string weight_name(int x, int row, Metric m) {
  return "W(" + std::to_string(x) + ")[" + std::to_string(row) + "]." + std::string(to_string(m));
}

void finish_phase(const Phase& phase, int x, PhaseReachability& r, std::vector<std::string>& dead) {
  for (int y = 1; y <= r.task_count; ++y) {
    if (!r.reachable.count(y)) r.unreachable.insert(y);
  }
  if (!phase.matrix) return;
  for (const auto& [i, w] : phase.matrix->rows) {
    if (i < 1 || i > x) continue;
    for (Metric m : kAllMetrics) {
      if (weight_of(w, m) == 0) continue;
      const BitRef b{m == Metric::kSigma ? Metric::kSigma : m, i};
      auto it = r.sensitive.find(b.name());
      if (it == r.sensitive.end() || !it->second) dead.push_back(weight_name(x, i, m));
    }
  }
}

std::map<std::string, bool> witness_of(const std::vector<BitRef>& bits, std::uint64_t mask) {
  std::map<std::string, bool> w;
  for (std::size_t j = 0; j < bits.size(); ++j) w[bits[j].name()] = ((mask >> j) & 1U) != 0;
  return w;
}

// Common prologue: returns false when the phase needs no enumeration.
bool prepare(const Phase& phase, int x, PhaseReachability& r) {
  r.phase = x;
  r.task_count = phase.task_count();
  if (r.task_count <= 1) {
    r.reachable.insert(1);
    r.witnesses[1] = {};
    r.distribution[1] = 1;
    return false;
  }
  if (!phase.matrix) {
    r.error = "phase has several tasks but no decision matrix";
    return false;
  }
  if (phase.matrix->denominator(x) == 0) {
    r.error = "decision matrix has no weight";
    return false;
  }
  r.bits = referenced_bits(phase, x);
  return true;
}

}  // namespace

double StudentProfile::question(const std::string& id) const {
  auto it = questions.find(id);
  return it == questions.end() ? default_question : it->second;
}

PhaseBehavior StudentProfile::phase(int x) const {
  auto it = phases.find(x);
  return it == phases.end() ? default_phase : it->second;
}

std::vector<StudentProfile> profiles_from_json(const Json& j, const TrainingDefinition& def) {
  const Json* list = &j;
  if (j.is_object()) {
    auto it = j.find("profiles");
    if (it == j.end()) throw Error(ErrorCode::kInvalidArgument, "profiles document has no 'profiles' array");
    list = &*it;
  }
  if (!list->is_array() || list->empty()) throw Error(ErrorCode::kInvalidArgument, "'profiles' must be a non-empty array");
  std::vector<StudentProfile> out;
  std::set<std::string> names;
  for (const auto& pj : *list) {
    if (!pj.is_object()) throw Error(ErrorCode::kInvalidArgument, "profile must be an object");
    StudentProfile p;
    p.name = pj.value("name", "");
    if (p.name.empty()) throw Error(ErrorCode::kInvalidArgument, "profile without a name");
    if (!names.insert(p.name).second) throw Error(ErrorCode::kInvalidArgument, "duplicate profile '" + p.name + "'");
    const std::string where = "profile '" + p.name + "'";
    for (const auto& [key, value] : pj.items()) {
      if (key != "name" && key != "questions" && key != "phases") {
        throw Error(ErrorCode::kInvalidArgument, where + ": unknown key '" + key + "'");
      }
    }
    if (auto qs = pj.find("questions"); qs != pj.end()) {
      if (!qs->is_object()) throw Error(ErrorCode::kInvalidArgument, where + ".questions must be an object");
      for (const auto& [id, value] : qs->items()) {
        const double prob = probability(value, where + ".questions." + id);
        if (id == "default") {
          p.default_question = prob;
        } else if (def.assessment.find_question(id) == nullptr) {
          throw Error(ErrorCode::kInvalidArgument, where + ": unknown question '" + id + "'");
        } else {
          p.questions[id] = prob;
        }
      }
    }
    if (auto ps = pj.find("phases"); ps != pj.end()) {
      if (!ps->is_object()) throw Error(ErrorCode::kInvalidArgument, where + ".phases must be an object");
      if (auto d = ps->find("default"); d != ps->end()) {
        p.default_phase = behavior_from_json(*d, p.default_phase, where + ".phases.default");
      }
      for (const auto& [key, value] : ps->items()) {
        if (key == "default") continue;
        int x = -1;
        try {
          std::size_t used = 0;
          x = std::stoi(key, &used);
          if (used != key.size()) x = -1;
        } catch (const std::exception&) {
          x = -1;
        }
        if (x < 0 || x > def.phase_count()) {
          throw Error(ErrorCode::kInvalidArgument, where + ": unknown phase '" + key + "'");
        }
        p.phases[x] = behavior_from_json(value, p.default_phase, where + ".phases." + key);
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<StudentProfile> load_profiles_file(const std::filesystem::path& path, const TrainingDefinition& def) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  Json j;
  try {
    j = Json::parse(buf.str());
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  return profiles_from_json(j, def);
}

CohortResult simulate_cohort(const TrainingDefinition& def, const std::vector<StudentProfile>& profiles,
                             const CohortOptions& options) {
  auto clock = std::make_shared<ManualClock>(TimestampMs{std::chrono::milliseconds{1'700'000'000'000}});
  EngineOptions eo;
  eo.store_dir = options.store_dir;
  eo.clock = clock;
  eo.validate_definitions = options.validate_definitions;
  Engine engine(eo);
  return simulate_cohort(engine, *clock, def, profiles, options);
}

CohortResult simulate_cohort(Engine& engine, ManualClock& clock, const TrainingDefinition& def,
                             const std::vector<StudentProfile>& profiles, const CohortOptions& options) {
  if (options.n_per_profile < 0) throw Error(ErrorCode::kInvalidArgument, "n_per_profile must be non-negative");
  const int total = std::max(1, options.n_per_profile * static_cast<int>(profiles.size()));
  const InstanceInfo info = engine.create_instance(def, total);
  CohortResult result;
  result.instance_id = info.id;
  const int m = def.phase_count();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::uint32_t index = 0;
  for (const auto& profile : profiles) {
    for (int i = 0; i < options.n_per_profile; ++i, ++index) {
      std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32), index};
      std::mt19937_64 rng(seq);
      auto draw = [&](double p) { return unit(rng) < p; };

      SimulatedStudent st;
      st.profile = profile.name;
      st.user_ref = "sim-" + profile.name + "-" + std::to_string(i + 1);
      const TrainingRun joined = engine.join(info.access_token, st.user_ref);
      st.run_id = joined.run_id;
      clock.advance(std::chrono::milliseconds{1});

      if (draw(profile.phase(0).quit)) {
        st.terminal = "quit";
        st.quit_phase = 0;
        result.students.push_back(std::move(st));
        continue;
      }
      Answers answers;
      for (const auto& q : def.assessment.questions) {
        answers[q.id] = draw(profile.question(q.id)) ? correct_answer(q) : wrong_answer(q);
      }
      clock.advance(std::chrono::milliseconds{1});
      try {
        engine.submit_assessment(st.run_id, answers);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kDecisionFailed) throw;
        st.terminal = "parked";
        result.students.push_back(std::move(st));
        continue;
      }

      for (int x = 1; x <= m; ++x) {
        const TrainingRun run = engine.run(st.run_id);
        st.tasks.push_back(run.task);
        const PhaseBehavior b = profile.phase(x);
        if (draw(b.quit)) {
          st.terminal = "quit";
          st.quit_phase = x;
          break;
        }
        const bool k = draw(b.k);
        const bool a = draw(b.a);
        const bool t = draw(b.t);
        const bool s = draw(b.s);
        const PhaseMetricSpec& spec = def.phase(x).metric_spec;
        const Task& task = def.phase(x).task(run.task);
        const TimestampMs start = run.phase_started_at;

        if (!s) engine.reveal_solution(st.run_id);
        std::vector<std::string> cmds;
        if (k) {
          cmds = spec.required_keywords;
        } else if (spec.required_keywords.empty() && spec.max_commands) {
          cmds.assign(static_cast<std::size_t>(*spec.max_commands) + 1, "echo");
        }
        const std::int64_t e_us = spec.expected_time.count();
        const std::int64_t ms = t ? e_us / 2000 : (e_us + 999) / 1000;
        for (std::size_t j = 0; j < cmds.size(); ++j) {
          CommandEvent c;
          c.timestamp = to_micros(start) + std::chrono::microseconds{static_cast<std::int64_t>(j)};
          c.username = "student";
          c.hostname = "sandbox-" + std::to_string(run.sandbox_uid);
          c.src_ip = "10.1.0." + std::to_string(run.sandbox_uid % 250 + 1);
          c.cmd = cmds[j];
          c.cmd_type = "bash";
          c.sandbox_uid = run.sandbox_uid;
          c.wd = "/home/student";
          engine.route_command(c);
        }
        clock.set(start + std::chrono::milliseconds{ms});
        const int wrong = a ? 0 : (spec.max_wrong_answers ? *spec.max_wrong_answers + 1 : 0);
        const std::string bad = wrong_flag(task);
        for (int w = 0; w < wrong; ++w) engine.submit_answer(st.run_id, bad);
        engine.submit_answer(st.run_id, task.correct_answers.front());
        clock.advance(std::chrono::milliseconds{1});
        AdvanceResult next;
        try {
          next = engine.advance(st.run_id);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kDecisionFailed) throw;
          st.terminal = "parked";
          break;
        }
        if (next.kind == AdvanceResult::Kind::kQuestionnaire) {
          Json q = Json::object();
          for (const auto& question : def.questionnaire) q[question.id] = 1;
          clock.advance(std::chrono::milliseconds{1});
          engine.submit_questionnaire(st.run_id, q);
        }
        if (x == m) st.terminal = "finished";
      }
      clock.advance(std::chrono::milliseconds{1});
      result.students.push_back(std::move(st));
    }
  }
  if (options.close_instance) engine.close_instance(info.id);
  result.flow = engine.live_sankey(info.id);
  return result;
}

std::string BitRef::name() const {
  static constexpr const char* kLetters[] = {"p", "k", "a", "t", "s"};
  return kLetters[static_cast<int>(metric)] + std::to_string(row);
}

std::vector<BitRef> referenced_bits(const Phase& phase, int x) {
  std::vector<BitRef> bits;
  if (!phase.matrix) return bits;
  for (const auto& [i, w] : phase.matrix->rows) {
    if (i < 1 || i > x) continue;
    if (w.pi) bits.push_back({Metric::kPi, i});
    if (w.kappa) bits.push_back({Metric::kKappa, i});
    if (w.alpha) bits.push_back({Metric::kAlpha, i});
    if (w.theta) bits.push_back({Metric::kTheta, i});
    if (w.kappa || w.alpha || w.theta || w.sigma) bits.push_back({Metric::kSigma, i});
  }
  return bits;
}

int oracle_assign(const Phase& phase, int x, const std::vector<BitRef>& bits, std::uint64_t mask) {
  const int n = phase.task_count();
  if (n == 1) return 1;
  if (!phase.matrix) throw Error(ErrorCode::kZeroDenominator, "no decision matrix");
  std::uint64_t num = 0;
  std::uint64_t den = 0;
  for (int i = 1; i <= x; ++i) {
    const WeightRow w = phase.matrix->row(i);
    const std::uint64_t p = bit_value(bits, mask, Metric::kPi, i);
    const std::uint64_t k = bit_value(bits, mask, Metric::kKappa, i);
    const std::uint64_t a = bit_value(bits, mask, Metric::kAlpha, i);
    const std::uint64_t t = bit_value(bits, mask, Metric::kTheta, i);
    const std::uint64_t s = bit_value(bits, mask, Metric::kSigma, i);
    num += w.pi * p + s * (w.kappa * k + w.alpha * a + w.theta * t + w.sigma);
    den += std::uint64_t{w.pi} + w.kappa + w.alpha + w.theta + w.sigma;
  }
  if (den == 0) throw Error(ErrorCode::kZeroDenominator, "zero denominator");
  if (num == 0) return n;
  // y = trunc(n (1 - num/den)) + 1
  return static_cast<int>(static_cast<std::uint64_t>(n) * (den - num) / den) + 1;
}

MetricVectors vectors_for(int phases, const std::vector<BitRef>& bits, std::uint64_t mask) {
  MetricVectors v(phases);
  for (std::size_t j = 0; j < bits.size(); ++j) {
    const bool on = ((mask >> j) & 1U) != 0;
    switch (bits[j].metric) {
      case Metric::kPi:
        v.set_p(bits[j].row, on);
        break;
      case Metric::kKappa:
        v.set_k(bits[j].row, on);
        break;
      case Metric::kAlpha:
        v.set_a(bits[j].row, on);
        break;
      case Metric::kTheta:
        v.set_t(bits[j].row, on);
        break;
      case Metric::kSigma:
        v.set_s(bits[j].row, on);
        break;
    }
  }
  return v;
}

ReachabilityReport enumerate_paths(const TrainingDefinition& def, int cap) {
  ReachabilityReport report;
  for (int x = 1; x <= def.phase_count(); ++x) {
    const Phase& phase = def.phase(x);
    PhaseReachability r;
    if (prepare(phase, x, r)) {
      const std::size_t b = r.bits.size();
      if (static_cast<int>(b) > cap || b >= 63) {
        throw Error(ErrorCode::kCapExceeded,
                    "phase " + std::to_string(x) + " references " + std::to_string(b) + " bits (cap " +
                        std::to_string(cap) + ")",
                    "use Monte-Carlo sampling instead");
      }
      const std::uint64_t total = std::uint64_t{1} << b;
      std::vector<std::uint8_t> ys(total);
      for (std::uint64_t mask = 0; mask < total; ++mask) {
        const int y = oracle_assign(phase, x, r.bits, mask);
        ys[mask] = static_cast<std::uint8_t>(y);
        if (r.reachable.insert(y).second) r.witnesses[y] = witness_of(r.bits, mask);
        ++r.distribution[y];
      }
      for (std::size_t j = 0; j < b; ++j) {
        const std::uint64_t bit = std::uint64_t{1} << j;
        bool flips = false;
        for (std::uint64_t mask = 0; mask < total && !flips; ++mask) {
          if ((mask & bit) == 0 && ys[mask] != ys[mask | bit]) flips = true;
        }
        r.sensitive[r.bits[j].name()] = flips;
      }
      r.samples = total;
    }
    finish_phase(phase, x, r, report.dead_weights);
    report.phases.push_back(std::move(r));
  }
  return report;
}

ReachabilityReport sample_paths(const TrainingDefinition& def, std::uint64_t samples, std::uint64_t seed) {
  ReachabilityReport report;
  report.monte_carlo = true;
  std::mt19937_64 rng(seed);
  for (int x = 1; x <= def.phase_count(); ++x) {
    const Phase& phase = def.phase(x);
    PhaseReachability r;
    r.exhaustive = false;
    if (prepare(phase, x, r)) {
      const std::size_t b = r.bits.size();
      if (b >= 64) throw Error(ErrorCode::kCapExceeded, "phase " + std::to_string(x) + " references too many bits");
      const std::uint64_t full = b == 0 ? 0 : (~std::uint64_t{0} >> (64 - b));
      for (const auto& bit : r.bits) r.sensitive[bit.name()] = false;
      for (std::uint64_t n = 0; n < samples; ++n) {
        const std::uint64_t mask = rng() & full;
        const int y = oracle_assign(phase, x, r.bits, mask);
        if (r.reachable.insert(y).second) r.witnesses[y] = witness_of(r.bits, mask);
        ++r.distribution[y];
        for (std::size_t j = 0; j < b; ++j) {
          auto& flag = r.sensitive[r.bits[j].name()];
          if (!flag && oracle_assign(phase, x, r.bits, mask ^ (std::uint64_t{1} << j)) != y) flag = true;
        }
      }
      r.samples = samples;
    }
    finish_phase(phase, x, r, report.dead_weights);
    report.phases.push_back(std::move(r));
  }
  return report;
}

AuditReport audit_weights(const TrainingDefinition& def, int cap) {
  AuditReport report;
  report.validation = validate_definition(def);
  if (!report.validation.ok()) return report;
  try {
    report.reachability = enumerate_paths(def, cap);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kCapExceeded) throw;
    report.reachability = sample_paths(def, 100000, 0);
  }
  return report;
}

Json to_json(const ReachabilityReport& report) {
  Json phases = Json::array();
  for (const auto& r : report.phases) {
    Json bits = Json::array();
    for (const auto& b : r.bits) bits.push_back(b.name());
    Json witnesses = Json::object();
    for (const auto& [y, w] : r.witnesses) witnesses[std::to_string(y)] = w;
    Json dist = Json::object();
    for (const auto& [y, n] : r.distribution) dist[std::to_string(y)] = n;
    Json j = {{"phase", r.phase},
              {"task_count", r.task_count},
              {"bits", bits},
              {"exhaustive", r.exhaustive},
              {"samples", r.samples},
              {"reachable", r.reachable},
              {"unreachable", r.unreachable},
              {"witnesses", witnesses},
              {"distribution", dist},
              {"sensitive", r.sensitive}};
    if (!r.error.empty()) j["error"] = r.error;
    phases.push_back(std::move(j));
  }
  return {{"mode", report.monte_carlo ? "monte_carlo" : "exhaustive"},
          {"phases", phases},
          {"dead_weights", report.dead_weights}};
}

std::string to_text(const ReachabilityReport& report) {
  std::ostringstream out;
  out << "reachability (" << (report.monte_carlo ? "monte-carlo" : "exhaustive") << ")\n";
  auto list = [](const std::set<int>& s) {
    if (s.empty()) return std::string("-");
    std::string t;
    for (int y : s) t += (t.empty() ? "" : " ") + std::to_string(y);
    return t;
  };
  for (const auto& r : report.phases) {
    out << "phase " << r.phase << ": " << r.task_count << " task(s), " << r.bits.size() << " bit(s)";
    if (r.samples > 0) out << ", " << r.samples << (r.exhaustive ? " assignments" : " samples");
    out << "\n";
    if (!r.error.empty()) out << "  error: " << r.error << "\n";
    out << "  reachable: " << list(r.reachable) << "\n";
    out << "  unreachable: " << list(r.unreachable) << "\n";
    for (const auto& [y, w] : r.witnesses) {
      if (w.empty()) continue;
      out << "  witness y=" << y << ":";
      for (const auto& [name, on] : w) out << " " << name << "=" << (on ? 1 : 0);
      out << "\n";
    }
  }
  out << "dead weights:";
  if (report.dead_weights.empty()) out << " none";
  for (const auto& d : report.dead_weights) out << " " << d;
  out << "\n";
  return out.str();
}

std::string AuditReport::to_text() const {
  std::string out = validation.to_text();
  if (!out.empty() && out.back() != '\n') out += "\n";
  if (reachability) {
    out += adr::to_text(*reachability);
  } else {
    out += "reachability: skipped, definition has validation errors\n";
  }
  return out;
}

Json AuditReport::to_json() const {
  Json j = {{"validation", validation.to_json()}};
  j["reachability"] = reachability ? adr::to_json(*reachability) : Json();
  return j;
}

}  // namespace adr
