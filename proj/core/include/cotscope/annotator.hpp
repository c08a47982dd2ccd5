#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cotscope/chunker.hpp"
#include "cotscope/corpus.hpp"
#include "cotscope/llm_client.hpp"

namespace cotscope {

enum class Activity { Progress, Review };
enum class Motivation { Clear, Semiclear, Unclear };

std::string_view to_string(Activity a);
std::string_view to_string(Motivation m);

struct ChunkAnnotation {
  std::size_t chunk_index = 0;
  Activity activity = Activity::Progress;
  std::optional<Motivation> motivation;  // review chunks only
  std::optional<std::string> flag;       // "defaulted", "transport_error: ..."
  friend bool operator==(const ChunkAnnotation&, const ChunkAnnotation&) = default;
};

/// Tolerant one-word reply parsers: case, surrounding punctuation, quotes and
/// hyphenation ("Semi-clear") are ignored.
std::optional<Activity> parse_activity_reply(std::string_view reply);
std::optional<Motivation> parse_motivation_reply(std::string_view reply);

struct JudgeConfig {
  std::string model_id = "judge";
  std::size_t context_window = 5;
  double temperature = 0.0;
  double top_p = 1.0;
};

struct AnnotationRun {
  std::vector<ChunkAnnotation> annotations;
  std::size_t calls = 0;
  std::size_t defaulted = 0;
  std::vector<std::string> errors;  // transport failures, one entry per failed chunk
};

class Annotator {
 public:
  Annotator(LlmClient& client, JudgeConfig config);

  /// One judge call per chunk with up to `context_window` neighbours on each side.
  /// Unparseable replies are retried once, then default to progress with a flag.
  AnnotationRun label_activity(const std::vector<Chunk>& chunks);

  /// Adds clear/semiclear/unclear to every review chunk; progress chunks are
  /// untouched. Unparseable replies default to unclear with a flag.
  AnnotationRun label_motivation(const std::vector<Chunk>& chunks, std::vector<ChunkAnnotation> annotations);

  ChatRequest activity_request(const std::vector<Chunk>& chunks, std::size_t target) const;
  ChatRequest motivation_request(const std::vector<Chunk>& chunks, std::size_t target) const;
  /// Follow-up sent once after an unparseable reply.
  static ChatRequest retry_request(ChatRequest original, std::string_view bad_reply, std::string_view instruction);

  static const char* activity_retry_instruction();
  static const char* motivation_retry_instruction();

 private:
  LlmClient& client_;
  JudgeConfig config_;
};

struct LexicalMetrics {
  std::size_t length_chars = 0;
  double review_ratio = 0.0;
  std::optional<double> review_centroid;
  double review_chunk_fraction = 0.0;
  double switch_count_norm = 0.0;
  std::optional<double> motivation_score;
};

/// Character-level review statistics. Centroid and motivation are undefined when
/// there are no review chunks; motivation is also undefined if any review chunk
/// lacks a motivation label.
LexicalMetrics lexical_metrics(const Trace& trace, const std::vector<Chunk>& chunks,
                               const std::vector<ChunkAnnotation>& annotations);

/// Character-weighted agreement between two labelings of the same chunks, as
/// fractions of all characters. Rows are the reference ("true") labels.
struct ConfusionMatrix {
  double review_as_review = 0.0;
  double review_as_progress = 0.0;
  double progress_as_review = 0.0;
  double progress_as_progress = 0.0;
  std::size_t total_chars = 0;
};

ConfusionMatrix confusion_matrix(const std::vector<Chunk>& chunks, const std::vector<Activity>& reference,
                                 const std::vector<Activity>& predicted);

using AnnotationsByTrace = std::map<std::string, std::vector<ChunkAnnotation>>;

/// annotations.jsonl: {"trace_id","chunk_index","activity","motivation"?,"flag"?}
void write_annotations_jsonl(const AnnotationsByTrace& annotations, const std::filesystem::path& path);
AnnotationsByTrace read_annotations_jsonl(const std::filesystem::path& path);

}  // namespace cotscope
