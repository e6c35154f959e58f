#include "adr/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "adr/error.hpp"

namespace adr {
namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::kSchemaViolation, "schema violation at " + path + ": " + what, path);
}

// Reads one JSON object and rejects keys that were never asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) schema_error(path_, "expected object");
  }

  ~ObjectReader() = default;

  const Json* optional(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  const Json& required(const std::string& key) {
    const Json* v = optional(key);
    if (v == nullptr) schema_error(path_, "missing field '" + key + "'");
    return *v;
  }

  std::string string(const std::string& key, bool req = true) {
    const Json* v = req ? &required(key) : optional(key);
    if (v == nullptr) return {};
    if (!v->is_string()) schema_error(sub(key), "expected string");
    return v->get<std::string>();
  }

  std::int64_t integer(const std::string& key) { return as_integer(required(key), sub(key)); }

  std::optional<std::int64_t> optional_integer(const std::string& key) {
    const Json* v = optional(key);
    if (v == nullptr) return std::nullopt;
    return as_integer(*v, sub(key));
  }

  bool boolean(const std::string& key, bool fallback) {
    const Json* v = optional(key);
    if (v == nullptr) return fallback;
    if (!v->is_boolean()) schema_error(sub(key), "expected boolean");
    return v->get<bool>();
  }

  std::vector<std::string> strings(const std::string& key, bool req) {
    const Json* v = req ? &required(key) : optional(key);
    std::vector<std::string> out;
    if (v == nullptr) return out;
    if (!v->is_array()) schema_error(sub(key), "expected array");
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) schema_error(sub(key) + "/" + std::to_string(i), "expected string");
      out.push_back((*v)[i].get<std::string>());
    }
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) schema_error(path_, "unknown field '" + it.key() + "'");
    }
  }

  std::string sub(const std::string& key) const { return path_ + "/" + key; }

  static std::int64_t as_integer(const Json& v, const std::string& path) {
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number_float()) {
      double d = v.get<double>();
      if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<std::int64_t>(d);
    }
    schema_error(path, "expected integer");
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

const Json& array_at(const Json& j, const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected array");
  return j;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
           return std::tolower(x) == std::tolower(y);
         });
}

QuestionKind parse_kind(const std::string& s, const std::string& path) {
  if (s == "multiple-choice") return QuestionKind::kMultipleChoice;
  if (s == "free-text") return QuestionKind::kFreeText;
  if (s == "self-assessment") return QuestionKind::kSelfAssessment;
  schema_error(path, "unknown question kind '" + s + "'");
}

Question parse_question(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  Question q;
  q.id = r.string("id");
  q.text = r.string("text", false);
  q.kind = parse_kind(r.string("kind"), r.sub("kind"));
  q.choices = r.strings("choices", false);
  q.correct_choices = r.strings("correct_choices", false);
  q.accepted_answers = r.strings("accepted_answers", false);
  q.case_sensitive = r.boolean("case_sensitive", false);
  if (auto v = r.optional_integer("scale_max")) q.scale_max = static_cast<int>(*v);
  if (const Json* lv = r.optional("sufficient_levels")) {
    array_at(*lv, r.sub("sufficient_levels"));
    for (std::size_t i = 0; i < lv->size(); ++i) {
      q.sufficient_levels.push_back(static_cast<int>(
          ObjectReader::as_integer((*lv)[i], r.sub("sufficient_levels") + "/" + std::to_string(i))));
    }
  }
  r.finish();
  return q;
}

Json question_to_json(const Question& q) {
  Json j = {{"id", q.id}, {"kind", std::string(to_string(q.kind))}};
  if (!q.text.empty()) j["text"] = q.text;
  if (!q.choices.empty()) j["choices"] = q.choices;
  if (!q.correct_choices.empty()) j["correct_choices"] = q.correct_choices;
  if (!q.accepted_answers.empty()) j["accepted_answers"] = q.accepted_answers;
  if (q.case_sensitive) j["case_sensitive"] = true;
  if (q.scale_max != 0) j["scale_max"] = q.scale_max;
  if (!q.sufficient_levels.empty()) j["sufficient_levels"] = q.sufficient_levels;
  return j;
}

std::uint32_t parse_weight(const Json& v, const std::string& path) {
  std::int64_t w = ObjectReader::as_integer(v, path);
  if (w < 0) schema_error(path, "weight must be non-negative");
  if (w > 1'000'000) schema_error(path, "weight out of range");
  return static_cast<std::uint32_t>(w);
}

DecisionMatrix parse_matrix(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  DecisionMatrix m;
  const Json& rows = r.required("rows");
  if (!rows.is_object()) schema_error(r.sub("rows"), "expected object");
  for (auto it = rows.begin(); it != rows.end(); ++it) {
    const std::string row_path = r.sub("rows") + "/" + it.key();
    int index = 0;
    try {
      std::size_t used = 0;
      index = std::stoi(it.key(), &used);
      if (used != it.key().size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      schema_error(row_path, "row key must be an integer");
    }
    ObjectReader rr(it.value(), row_path);
    WeightRow w;
    for (Metric metric : kAllMetrics) {
      std::string key(to_string(metric));
      if (const Json* v = rr.optional(key)) w.set(metric, parse_weight(*v, rr.sub(key)));
    }
    rr.finish();
    m.rows[index] = w;
  }
  r.finish();
  return m;
}

Json matrix_to_json(const DecisionMatrix& m) {
  Json rows = Json::object();
  for (const auto& [i, w] : m.rows) {
    rows[std::to_string(i)] = {{"pi", w.pi}, {"kappa", w.kappa}, {"alpha", w.alpha},
                               {"theta", w.theta}, {"sigma", w.sigma}};
  }
  return {{"rows", rows}};
}

Task parse_task(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  Task t;
  t.assignment = r.string("assignment");
  t.solution = r.string("solution", false);
  t.correct_answers = r.strings("correct_answers", true);
  t.case_sensitive = r.boolean("case_sensitive", true);
  r.finish();
  return t;
}

PhaseMetricSpec parse_metric_spec(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  PhaseMetricSpec s;
  const Json& e = r.required("expected_time_s");
  if (!e.is_number()) schema_error(r.sub("expected_time_s"), "expected number");
  s.expected_time = std::chrono::microseconds(std::llround(e.get<double>() * 1e6));
  s.required_keywords = r.strings("required_keywords", false);
  if (auto v = r.optional_integer("max_commands")) s.max_commands = static_cast<int>(*v);
  if (auto v = r.optional_integer("max_wrong_answers")) s.max_wrong_answers = static_cast<int>(*v);
  r.finish();
  return s;
}

Json metric_spec_to_json(const PhaseMetricSpec& s) {
  Json j = {{"expected_time_s", static_cast<double>(s.expected_time.count()) / 1e6},
            {"required_keywords", s.required_keywords}};
  if (s.max_commands) j["max_commands"] = *s.max_commands;
  if (s.max_wrong_answers) j["max_wrong_answers"] = *s.max_wrong_answers;
  return j;
}

}  // namespace

Ratio parse_ratio(const Json& value) {
  if (value.is_string()) {
    const std::string s = value.get<std::string>();
    auto slash = s.find('/');
    try {
      if (slash == std::string::npos) throw std::invalid_argument(s);
      std::size_t u1 = 0, u2 = 0;
      long long n = std::stoll(s.substr(0, slash), &u1);
      long long d = std::stoll(s.substr(slash + 1), &u2);
      if (u1 != slash || u2 != s.size() - slash - 1 || n < 0 || d <= 0) throw std::invalid_argument(s);
      return {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(d)};
    } catch (const std::exception&) {
      throw Error(ErrorCode::kSchemaViolation, "ratio must be a number or 'num/den': " + s);
    }
  }
  if (!value.is_number()) throw Error(ErrorCode::kSchemaViolation, "ratio must be a number");
  const double d = value.get<double>();
  if (!(d >= 0.0) || d > 1e9) throw Error(ErrorCode::kSchemaViolation, "ratio out of range");
  // Smallest denominator reproducing the decimal.
  for (std::uint64_t den = 1; den <= 1'000'000; ++den) {
    const double scaled = d * static_cast<double>(den);
    const double rounded = std::round(scaled);
    if (std::abs(scaled - rounded) < 1e-9 * std::max(1.0, scaled)) {
      return {static_cast<std::uint64_t>(rounded), den};
    }
  }
  return {static_cast<std::uint64_t>(std::llround(d * 1e6)), 1'000'000};
}

Json ratio_to_json(const Ratio& r) {
  std::uint64_t den = r.den;
  while (den % 2 == 0) den /= 2;
  while (den % 5 == 0) den /= 5;
  if (den == 1) return static_cast<double>(r.num) / static_cast<double>(r.den);
  return std::to_string(r.num) + "/" + std::to_string(r.den);
}

std::string_view to_string(QuestionKind kind) {
  switch (kind) {
    case QuestionKind::kMultipleChoice: return "multiple-choice";
    case QuestionKind::kFreeText: return "free-text";
    case QuestionKind::kSelfAssessment: return "self-assessment";
  }
  return "free-text";
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::kPi: return "pi";
    case Metric::kKappa: return "kappa";
    case Metric::kAlpha: return "alpha";
    case Metric::kTheta: return "theta";
    case Metric::kSigma: return "sigma";
  }
  return "pi";
}

Answers answers_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "answers must be a JSON object");
  Answers out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    AnswerValue v;
    const Json& a = it.value();
    if (a.is_string()) {
      v.push_back(a.get<std::string>());
    } else if (a.is_number_integer()) {
      v.push_back(std::to_string(a.get<std::int64_t>()));
    } else if (a.is_array()) {
      for (const auto& e : a) {
        if (!e.is_string()) throw Error(ErrorCode::kInvalidArgument, "answer '" + it.key() + "' has a non-string choice");
        v.push_back(e.get<std::string>());
      }
    } else if (!a.is_null()) {
      throw Error(ErrorCode::kInvalidArgument, "answer '" + it.key() + "' has an unsupported type");
    }
    out[it.key()] = std::move(v);
  }
  return out;
}

Json answers_to_json(const Answers& answers) {
  Json j = Json::object();
  for (const auto& [id, v] : answers) j[id] = v;
  return j;
}

bool Question::is_correct(const AnswerValue& answer) const {
  switch (kind) {
    case QuestionKind::kMultipleChoice: {
      std::set<std::string> given(answer.begin(), answer.end());
      std::set<std::string> expected(correct_choices.begin(), correct_choices.end());
      return !expected.empty() && given == expected;
    }
    case QuestionKind::kFreeText: {
      if (answer.size() != 1) return false;
      const std::string given = trim(answer.front());
      return std::any_of(accepted_answers.begin(), accepted_answers.end(), [&](const std::string& a) {
        return case_sensitive ? trim(a) == given : iequals(trim(a), given);
      });
    }
    case QuestionKind::kSelfAssessment: {
      if (answer.size() != 1) return false;
      try {
        std::size_t used = 0;
        const std::string s = trim(answer.front());
        int level = std::stoi(s, &used);
        if (used != s.size()) return false;
        return std::find(sufficient_levels.begin(), sufficient_levels.end(), level) !=
               sufficient_levels.end();
      } catch (const std::exception&) {
        return false;
      }
    }
  }
  return false;
}

const Question* AssessmentSpec::find_question(std::string_view id) const {
  for (const auto& q : questions) {
    if (q.id == id) return &q;
  }
  return nullptr;
}

const QuestionGroup* AssessmentSpec::group_for(int phase) const {
  for (const auto& g : groups) {
    if (g.phase == phase) return &g;
  }
  return nullptr;
}

std::uint32_t WeightRow::get(Metric m) const {
  switch (m) {
    case Metric::kPi: return pi;
    case Metric::kKappa: return kappa;
    case Metric::kAlpha: return alpha;
    case Metric::kTheta: return theta;
    case Metric::kSigma: return sigma;
  }
  return 0;
}

void WeightRow::set(Metric m, std::uint32_t w) {
  switch (m) {
    case Metric::kPi: pi = w; break;
    case Metric::kKappa: kappa = w; break;
    case Metric::kAlpha: alpha = w; break;
    case Metric::kTheta: theta = w; break;
    case Metric::kSigma: sigma = w; break;
  }
}

WeightRow DecisionMatrix::row(int i) const {
  auto it = rows.find(i);
  return it == rows.end() ? WeightRow{} : it->second;
}

std::uint64_t DecisionMatrix::denominator(int x) const {
  std::uint64_t total = 0;
  for (const auto& [i, w] : rows) {
    if (i >= 1 && i <= x) total += w.sum();
  }
  return total;
}

bool Task::accepts(std::string_view answer) const {
  const std::string given = trim(answer);
  return std::any_of(correct_answers.begin(), correct_answers.end(), [&](const std::string& a) {
    return case_sensitive ? trim(a) == given : iequals(trim(a), given);
  });
}

TrainingDefinition definition_from_json(const Json& j) {
  ObjectReader r(j, "");
  TrainingDefinition def;
  def.format_version = static_cast<int>(r.integer("format_version"));
  if (def.format_version != kFormatVersion) {
    schema_error("/format_version", "unsupported format_version " + std::to_string(def.format_version));
  }
  def.id = r.string("id");
  if (auto v = r.optional_integer("version")) def.version = static_cast<int>(*v);
  def.title = r.string("title");
  def.intro = r.string("intro", false);

  {
    ObjectReader ar(r.required("assessment"), "/assessment");
    const Json& qs = array_at(ar.required("questions"), "/assessment/questions");
    for (std::size_t i = 0; i < qs.size(); ++i) {
      def.assessment.questions.push_back(parse_question(qs[i], "/assessment/questions/" + std::to_string(i)));
    }
    if (const Json* gs = ar.optional("groups")) {
      array_at(*gs, "/assessment/groups");
      for (std::size_t i = 0; i < gs->size(); ++i) {
        const std::string path = "/assessment/groups/" + std::to_string(i);
        ObjectReader gr((*gs)[i], path);
        QuestionGroup g;
        g.phase = static_cast<int>(gr.integer("phase"));
        g.questions = gr.strings("questions", true);
        try {
          g.minimal_ratio = parse_ratio(gr.required("minimal_ratio"));
        } catch (const Error& e) {
          schema_error(gr.sub("minimal_ratio"), e.what());
        }
        gr.finish();
        def.assessment.groups.push_back(std::move(g));
      }
    }
    ar.finish();
  }

  const Json& phases = array_at(r.required("phases"), "/phases");
  if (phases.empty()) schema_error("/phases", "a training needs at least one phase");
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const std::string path = "/phases/" + std::to_string(i);
    ObjectReader pr(phases[i], path);
    Phase p;
    p.index = static_cast<int>(i) + 1;
    p.title = pr.string("title");
    const Json& tasks = array_at(pr.required("tasks"), path + "/tasks");
    if (tasks.empty()) schema_error(path + "/tasks", "a phase needs at least one task");
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      p.tasks.push_back(parse_task(tasks[t], path + "/tasks/" + std::to_string(t)));
    }
    p.metric_spec = parse_metric_spec(pr.required("metric_spec"), path + "/metric_spec");
    if (const Json* m = pr.optional("matrix")) p.matrix = parse_matrix(*m, path + "/matrix");
    pr.finish();
    def.phases.push_back(std::move(p));
  }

  if (const Json* qs = r.optional("questionnaire")) {
    array_at(*qs, "/questionnaire");
    for (std::size_t i = 0; i < qs->size(); ++i) {
      def.questionnaire.push_back(parse_question((*qs)[i], "/questionnaire/" + std::to_string(i)));
    }
  }
  r.finish();
  return def;
}

TrainingDefinition parse_definition(std::string_view document) {
  Json j;
  try {
    j = Json::parse(document.begin(), document.end());
  } catch (const Json::parse_error& e) {
    // Translate the byte offset into line:column for humans.
    std::size_t line = 1, col = 1;
    const std::size_t limit = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, document.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (document[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::kParseError,
                "syntax error at line " + std::to_string(line) + ", column " + std::to_string(col),
                "byte " + std::to_string(e.byte));
  }
  return definition_from_json(j);
}

TrainingDefinition load_definition_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open definition file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_definition(ss.str());
}

Json to_json(const TrainingDefinition& def) {
  Json questions = Json::array();
  for (const auto& q : def.assessment.questions) questions.push_back(question_to_json(q));
  Json groups = Json::array();
  for (const auto& g : def.assessment.groups) {
    groups.push_back({{"phase", g.phase}, {"questions", g.questions},
                      {"minimal_ratio", ratio_to_json(g.minimal_ratio)}});
  }
  Json phases = Json::array();
  for (const auto& p : def.phases) {
    Json tasks = Json::array();
    for (const auto& t : p.tasks) {
      tasks.push_back({{"assignment", t.assignment}, {"solution", t.solution},
                       {"correct_answers", t.correct_answers}, {"case_sensitive", t.case_sensitive}});
    }
    Json pj = {{"title", p.title}, {"tasks", tasks}, {"metric_spec", metric_spec_to_json(p.metric_spec)}};
    if (p.matrix) pj["matrix"] = matrix_to_json(*p.matrix);
    phases.push_back(std::move(pj));
  }
  Json j = {{"format_version", def.format_version},
            {"id", def.id},
            {"version", def.version},
            {"title", def.title},
            {"intro", def.intro},
            {"assessment", {{"questions", questions}, {"groups", groups}}},
            {"phases", phases}};
  if (!def.questionnaire.empty()) {
    Json q = Json::array();
    for (const auto& item : def.questionnaire) q.push_back(question_to_json(item));
    j["questionnaire"] = q;
  }
  return j;
}

std::string serialize_definition(const TrainingDefinition& def) { return to_json(def).dump(2) + "\n"; }

bool ValidationReport::has_error(std::string_view code) const {
  return std::any_of(errors.begin(), errors.end(), [&](const Issue& i) { return i.code == code; });
}

bool ValidationReport::has_warning(std::string_view code) const {
  return std::any_of(warnings.begin(), warnings.end(), [&](const Issue& i) { return i.code == code; });
}

Json ValidationReport::to_json() const {
  auto issues = [](const std::vector<Issue>& list) {
    Json arr = Json::array();
    for (const auto& i : list) {
      Json j = {{"code", i.code}, {"message", i.message}};
      j["phase"] = i.phase ? Json(*i.phase) : Json(nullptr);
      arr.push_back(std::move(j));
    }
    return arr;
  };
  return {{"valid", ok()}, {"errors", issues(errors)}, {"warnings", issues(warnings)}};
}

std::string ValidationReport::to_text() const {
  std::ostringstream out;
  auto emit = [&](const char* level, const Issue& i) {
    out << level << " [" << i.code << "]";
    if (i.phase) out << " phase " << *i.phase;
    out << ": " << i.message << "\n";
  };
  for (const auto& i : errors) emit("error", i);
  for (const auto& i : warnings) emit("warning", i);
  out << (ok() ? "valid" : "invalid") << " (" << errors.size() << " errors, " << warnings.size()
      << " warnings)\n";
  return out.str();
}

ValidationReport validate_definition(const TrainingDefinition& def) {
  ValidationReport report;
  auto error = [&](std::string code, std::optional<int> phase, std::string msg) {
    report.errors.push_back({std::move(code), phase, std::move(msg)});
  };
  auto warn = [&](std::string code, std::optional<int> phase, std::string msg) {
    report.warnings.push_back({std::move(code), phase, std::move(msg)});
  };

  const int m = def.phase_count();
  if (m < 1) error("no-phases", std::nullopt, "a training needs at least one phase");

  std::set<std::string> ids;
  for (const auto& q : def.assessment.questions) {
    if (q.id.empty()) error("empty-question-id", std::nullopt, "assessment question without id");
    if (!ids.insert(q.id).second) error("duplicate-question-id", std::nullopt, "duplicate question id '" + q.id + "'");
    switch (q.kind) {
      case QuestionKind::kMultipleChoice:
        if (q.correct_choices.empty()) {
          error("question-without-key", std::nullopt, "multiple-choice question '" + q.id + "' has no correct choices");
        }
        for (const auto& c : q.correct_choices) {
          if (!q.choices.empty() && std::find(q.choices.begin(), q.choices.end(), c) == q.choices.end()) {
            error("unknown-choice", std::nullopt, "question '" + q.id + "' marks unknown choice '" + c + "' correct");
          }
        }
        break;
      case QuestionKind::kFreeText:
        if (q.accepted_answers.empty()) {
          error("question-without-key", std::nullopt, "free-text question '" + q.id + "' accepts no answer");
        }
        break;
      case QuestionKind::kSelfAssessment:
        if (q.sufficient_levels.empty()) {
          error("question-without-key", std::nullopt,
                "self-assessment question '" + q.id + "' declares no sufficient levels");
        }
        for (int level : q.sufficient_levels) {
          if (level < 1 || (q.scale_max > 0 && level > q.scale_max)) {
            error("level-out-of-scale", std::nullopt, "question '" + q.id + "' has level outside its scale");
          }
        }
        break;
    }
  }

  std::set<int> grouped_phases;
  for (const auto& g : def.assessment.groups) {
    if (g.phase < 1 || g.phase > m) {
      error("group-phase-out-of-range", g.phase, "question group bound to a phase that does not exist");
    }
    if (!grouped_phases.insert(g.phase).second) {
      error("duplicate-group", g.phase, "more than one question group for the phase");
    }
    if (g.questions.empty()) error("empty-group", g.phase, "question group references no questions");
    for (const auto& ref : g.questions) {
      if (def.assessment.find_question(ref) == nullptr) {
        error("dangling-question-ref", g.phase, "question group references unknown question '" + ref + "'");
      }
    }
    if (g.minimal_ratio.den == 0 || g.minimal_ratio.num > g.minimal_ratio.den) {
      error("ratio-out-of-range", g.phase, "minimal ratio must lie in [0, 1]");
    }
  }

  bool any_relationship = false;
  bool any_adaptive = false;
  for (const auto& p : def.phases) {
    const int x = p.index;
    const int n = p.task_count();
    if (n < 1) error("empty-phase", x, "phase has no tasks");
    if (p.metric_spec.expected_time.count() <= 0) error("non-positive-expected-time", x, "expected time must be positive");
    if (p.metric_spec.max_commands && *p.metric_spec.max_commands < 0) error("negative-cap", x, "max_commands is negative");
    if (p.metric_spec.max_wrong_answers && *p.metric_spec.max_wrong_answers < 0) {
      error("negative-cap", x, "max_wrong_answers is negative");
    }
    for (int y = 1; y <= n; ++y) {
      if (p.task(y).correct_answers.empty()) {
        error("task-without-answer", x, "task " + std::to_string(y) + " accepts no answer");
      }
    }

    if (n <= 1) {
      if (p.matrix && p.matrix->denominator(m) > 0) {
        warn("unused-matrix", x, "single-task phase ignores its decision matrix");
      }
      continue;
    }
    any_adaptive = true;
    if (n == 2) warn("two-task-phase", x, "only two tasks; struggling students have a single fallback variant");
    if (!p.matrix) {
      error("missing-matrix", x, "phase with several tasks needs a decision matrix");
      continue;
    }
    const DecisionMatrix& mat = *p.matrix;
    for (const auto& [i, w] : mat.rows) {
      if (w.is_zero()) continue;
      if (i < 1 || i > x) {
        error("row-out-of-range", x, "row " + std::to_string(i) + " carries weight but only rows 1.." +
                                          std::to_string(x) + " are evaluated");
        continue;
      }
      if (i == x && (w.kappa || w.alpha || w.theta || w.sigma)) {
        error("current-row-metric", x, "row of the entered phase may only weight the assessment (pi)");
      }
      if (w.pi > 0 && def.assessment.group_for(i) == nullptr) {
        error("pi-without-group", x, "row " + std::to_string(i) + " weights pi but phase " + std::to_string(i) +
                                         " has no question group");
      }
      if (i < x && (w.kappa || w.alpha || w.theta || w.sigma)) any_relationship = true;
    }
    if (mat.denominator(x) == 0) {
      error("zero-denominator", x, "all weights in rows 1.." + std::to_string(x) + " are zero");
      continue;
    }
    bool pi_only = true;
    for (const auto& [i, w] : mat.rows) {
      if (i >= 1 && i <= x && (w.kappa || w.alpha || w.theta || w.sigma)) pi_only = false;
    }
    if (pi_only) {
      warn("pi-only-matrix", x, "assignment depends on the pre-training assessment only; it might not reflect proficiency");
    }
  }
  if (any_adaptive && !any_relationship) {
    warn("assessment-only-adaptivity", std::nullopt,
         "no relationships between phases: tasks are assigned from the pre-training assessment only");
  }
  return report;
}

}  // namespace adr
