#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cotscope {

enum class Dataset { HARP, GPQADiamond, AIME25, Other };

std::string_view to_string(Dataset d);
/// Accepts the wire names "HARP", "GPQA-Diamond", "AIME25", "other".
Dataset parse_dataset(std::string_view name);

/// Closed difficulty label set per dataset. Empty for datasets that carry no labels;
/// `Dataset::Other` accepts any label and reports std::nullopt here.
std::optional<std::vector<std::string>> difficulty_labels(Dataset d);

struct Question {
  std::string id;
  Dataset dataset = Dataset::Other;
  std::optional<std::string> difficulty;
  std::string prompt;
  std::string gold_answer;
  std::vector<std::string> choices;

  bool multiple_choice() const { return !choices.empty(); }
};

struct Trace {
  std::string id;
  std::string question_id;
  std::string model_id;
  double temperature = 0.0;
  std::string cot;
  std::string final_answer;
  // Set by grading; `unparsed` marks traces where no answer could be extracted.
  std::optional<bool> correct;
  bool unparsed = false;
};

/// Questions and their sampled traces. Immutable once ingestion finishes, so
/// const access is safe to share across worker threads.
class Corpus {
 public:
  void add_question(Question q);
  void add_trace(Trace t);

  const Question* find_question(std::string_view id) const;
  const Question& question(std::string_view id) const;
  const std::map<std::string, Question, std::less<>>& questions() const { return questions_; }

  const std::vector<Trace>& traces() const { return traces_; }
  std::vector<Trace>& mutable_traces() { return traces_; }
  const Trace* find_trace(std::string_view id) const;

  std::size_t trace_count(std::string_view question_id, std::string_view model_id) const;
  std::map<std::pair<std::string, std::string>, std::size_t> trace_counts() const;

  std::map<std::string, std::string> provenance;

  friend bool operator==(const Corpus&, const Corpus&);

 private:
  std::map<std::string, Question, std::less<>> questions_;
  std::vector<Trace> traces_;
  std::map<std::string, std::size_t, std::less<>> trace_index_;
};

bool operator==(const Question& a, const Question& b);
bool operator==(const Trace& a, const Trace& b);

enum class RecordKind { Questions, Traces };

struct IngestDelta {
  RecordKind kind = RecordKind::Questions;
  std::size_t records = 0;
};

/// Parses one JSONL file into `corpus`. The file is validated completely before
/// anything is committed; the first failure throws IngestError with its line number.
IngestDelta ingest_jsonl(Corpus& corpus, const std::filesystem::path& path, RecordKind kind);

void write_questions_jsonl(const Corpus& corpus, const std::filesystem::path& path);
/// Traces are written with their grading fields ("correct", "unparsed") when set.
void write_traces_jsonl(const Corpus& corpus, const std::filesystem::path& path);

/// CoT length in Unicode scalar values.
std::size_t char_length(const Trace& trace);

}  // namespace cotscope
