#include "cotscope/corpus.hpp"

#include <algorithm>
#include <set>

#include "cotscope/errors.hpp"
#include "cotscope/ingest_error.hpp"
#include "cotscope/utf8.hpp"
#include "io.hpp"

namespace cotscope {

using io::json;

std::string_view to_string(Dataset d) {
  switch (d) {
    case Dataset::HARP: return "HARP";
    case Dataset::GPQADiamond: return "GPQA-Diamond";
    case Dataset::AIME25: return "AIME25";
    case Dataset::Other: return "other";
  }
  return "other";
}

Dataset parse_dataset(std::string_view name) {
  if (name == "HARP") return Dataset::HARP;
  if (name == "GPQA-Diamond") return Dataset::GPQADiamond;
  if (name == "AIME25") return Dataset::AIME25;
  if (name == "other") return Dataset::Other;
  throw ValidationError("unknown dataset '" + std::string(name) + "'");
}

std::optional<std::vector<std::string>> difficulty_labels(Dataset d) {
  switch (d) {
    case Dataset::HARP:
      return std::vector<std::string>{"level-1", "level-2", "level-3", "level-4", "level-5", "level-6"};
    case Dataset::GPQADiamond:
      return std::vector<std::string>{"easy-undergraduate", "hard-undergraduate", "hard-graduate",
                                      "post-graduate"};
    case Dataset::AIME25:
      return std::vector<std::string>{};
    case Dataset::Other:
      return std::nullopt;
  }
  return std::nullopt;
}

namespace {

void validate_question(const Question& q) {
  if (q.id.empty()) throw ValidationError("question id is empty");
  const bool mc_dataset = q.dataset == Dataset::GPQADiamond;
  const bool free_form = q.dataset == Dataset::HARP || q.dataset == Dataset::AIME25;
  if (mc_dataset && q.choices.empty())
    throw ValidationError("question " + q.id + ": multiple-choice dataset requires choices");
  if (free_form && !q.choices.empty())
    throw ValidationError("question " + q.id + ": free-form dataset must not carry choices");
  if (q.difficulty) {
    if (auto labels = difficulty_labels(q.dataset)) {
      if (std::find(labels->begin(), labels->end(), *q.difficulty) == labels->end())
        throw ValidationError("question " + q.id + ": difficulty '" + *q.difficulty +
                              "' is not a " + std::string(to_string(q.dataset)) + " label");
    }
  }
}

void validate_trace(const Trace& t) {
  if (t.id.empty()) throw ValidationError("trace id is empty");
  if (!(t.temperature >= 0.0 && t.temperature <= 1.0))
    throw ValidationError("trace " + t.id + ": temperature outside [0,1]");
}

template <typename T>
T required(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) throw ValidationError(std::string("missing field \"") + key + "\"");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("field \"") + key + "\" has the wrong type");
  }
}

Question question_from_json(const json& j) {
  Question q;
  q.id = required<std::string>(j, "id");
  q.dataset = parse_dataset(required<std::string>(j, "dataset"));
  if (auto it = j.find("difficulty"); it != j.end() && !it->is_null())
    q.difficulty = it->get<std::string>();
  q.prompt = required<std::string>(j, "prompt");
  q.gold_answer = required<std::string>(j, "gold_answer");
  if (auto it = j.find("choices"); it != j.end() && !it->is_null())
    q.choices = it->get<std::vector<std::string>>();
  return q;
}

Trace trace_from_json(const json& j) {
  Trace t;
  t.id = required<std::string>(j, "id");
  t.question_id = required<std::string>(j, "question_id");
  t.model_id = required<std::string>(j, "model_id");
  t.temperature = required<double>(j, "temperature");
  t.cot = required<std::string>(j, "cot");
  t.final_answer = required<std::string>(j, "final_answer");
  if (auto it = j.find("correct"); it != j.end() && !it->is_null()) t.correct = it->get<bool>();
  if (auto it = j.find("unparsed"); it != j.end() && !it->is_null()) t.unparsed = it->get<bool>();
  return t;
}

}  // namespace

void Corpus::add_question(Question q) {
  validate_question(q);
  if (questions_.count(q.id)) throw ValidationError("duplicate question id " + q.id);
  std::string id = q.id;
  questions_.emplace(std::move(id), std::move(q));
}

void Corpus::add_trace(Trace t) {
  validate_trace(t);
  if (!find_question(t.question_id))
    throw ValidationError("trace " + t.id + " references unknown question " + t.question_id);
  if (trace_index_.count(t.id)) throw ValidationError("duplicate trace id " + t.id);
  trace_index_.emplace(t.id, traces_.size());
  traces_.push_back(std::move(t));
}

const Question* Corpus::find_question(std::string_view id) const {
  auto it = questions_.find(id);
  return it == questions_.end() ? nullptr : &it->second;
}

const Question& Corpus::question(std::string_view id) const {
  if (const auto* q = find_question(id)) return *q;
  throw ValidationError("unknown question " + std::string(id));
}

const Trace* Corpus::find_trace(std::string_view id) const {
  auto it = trace_index_.find(id);
  return it == trace_index_.end() ? nullptr : &traces_[it->second];
}

std::size_t Corpus::trace_count(std::string_view question_id, std::string_view model_id) const {
  return static_cast<std::size_t>(std::count_if(traces_.begin(), traces_.end(), [&](const Trace& t) {
    return t.question_id == question_id && t.model_id == model_id;
  }));
}

std::map<std::pair<std::string, std::string>, std::size_t> Corpus::trace_counts() const {
  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  for (const auto& t : traces_) ++counts[{t.question_id, t.model_id}];
  return counts;
}

bool operator==(const Question& a, const Question& b) {
  return a.id == b.id && a.dataset == b.dataset && a.difficulty == b.difficulty &&
         a.prompt == b.prompt && a.gold_answer == b.gold_answer && a.choices == b.choices;
}

bool operator==(const Trace& a, const Trace& b) {
  return a.id == b.id && a.question_id == b.question_id && a.model_id == b.model_id &&
         a.temperature == b.temperature && a.cot == b.cot && a.final_answer == b.final_answer &&
         a.correct == b.correct && a.unparsed == b.unparsed;
}

bool operator==(const Corpus& a, const Corpus& b) {
  return a.questions_ == b.questions_ && a.traces_ == b.traces_ && a.provenance == b.provenance;
}

IngestDelta ingest_jsonl(Corpus& corpus, const std::filesystem::path& path, RecordKind kind) {
  const std::string file = path.string();
  if (!std::filesystem::exists(path)) throw ValidationError("no such file " + file);

  // Stage everything first so a bad line leaves the corpus untouched.
  std::vector<std::pair<std::size_t, Question>> questions;
  std::vector<std::pair<std::size_t, Trace>> traces;
  io::for_each_line(path, [&](std::size_t line, std::string_view text) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw IngestError(file, line, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw IngestError(file, line, "expected a JSON object");
    try {
      if (kind == RecordKind::Questions) {
        questions.emplace_back(line, question_from_json(j));
      } else {
        traces.emplace_back(line, trace_from_json(j));
      }
    } catch (const ValidationError& e) {
      throw IngestError(file, line, e.what());
    } catch (const json::exception& e) {
      throw IngestError(file, line, e.what());
    }
  });

  Corpus staged = corpus;
  for (auto& [line, q] : questions) {
    try {
      staged.add_question(std::move(q));
    } catch (const ValidationError& e) {
      throw IngestError(file, line, e.what());
    }
  }
  for (auto& [line, t] : traces) {
    try {
      staged.add_trace(std::move(t));
    } catch (const ValidationError& e) {
      throw IngestError(file, line, e.what());
    }
  }
  corpus = std::move(staged);
  return IngestDelta{kind, kind == RecordKind::Questions ? questions.size() : traces.size()};
}

void write_questions_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::string out;
  for (const auto& [id, q] : corpus.questions()) {
    json j;
    j["id"] = q.id;
    j["dataset"] = std::string(to_string(q.dataset));
    j["difficulty"] = q.difficulty ? json(*q.difficulty) : json(nullptr);
    j["prompt"] = q.prompt;
    j["gold_answer"] = q.gold_answer;
    if (!q.choices.empty()) j["choices"] = q.choices;
    out += io::dump(j);
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

void write_traces_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
  std::string out;
  for (const auto& t : corpus.traces()) {
    json j;
    j["id"] = t.id;
    j["question_id"] = t.question_id;
    j["model_id"] = t.model_id;
    j["temperature"] = t.temperature;
    j["cot"] = t.cot;
    j["final_answer"] = t.final_answer;
    if (t.correct) {
      j["correct"] = *t.correct;
      j["unparsed"] = t.unparsed;
    }
    out += io::dump(j);
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

std::size_t char_length(const Trace& trace) { return utf8::char_count(trace.cot); }

}  // namespace cotscope
