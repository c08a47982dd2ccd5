#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cotscope/graph.hpp"
#include "cotscope/llm_client.hpp"

namespace cotscope {

struct NodeQuote {
  std::size_t number = 0;  // position in the reply's numbered list
  std::string node_id;
  std::string quote;
  friend bool operator==(const NodeQuote&, const NodeQuote&) = default;
};

struct BranchRef {
  std::string failed_node_id;
  std::string branch_start_node_id;
  friend bool operator==(const BranchRef&, const BranchRef&) = default;
};

struct ExtractionResult {
  std::string dot;
  std::vector<NodeQuote> node_quotes;
  std::vector<BranchRef> branches;
  std::string raw_reply;
  ReasoningGraph graph;
};

/// Graph-extraction instructions followed by the node-quote / branch-analysis
/// addendum, verbatim.
const std::string& extraction_prompt();

/// Splits an extractor reply into its DOT block, numbered quote list and branch
/// analysis. The three sections are independent: a missing list leaves its
/// field empty. Throws ValidationError when the graph does not parse, a quoted
/// id is not a graph node, or a branch names unknown or non-failed nodes.
ExtractionResult parse_extraction_reply(std::string_view reply);

struct ExtractorConfig {
  std::string model_id = "extractor";
  double temperature = 0.0;
  double top_p = 1.0;
};

struct ExtractionOutcome {
  std::optional<ExtractionResult> result;
  std::string error;  // set when extraction failed
  int attempts = 0;
  bool failed() const { return !result.has_value(); }
  bool provider_failure = false;
};

class Extractor {
 public:
  Extractor(LlmClient& client, ExtractorConfig config);

  /// One call; on a parse failure, one retry that feeds the error back.
  ExtractionOutcome extract(std::string_view cot);
  std::vector<ExtractionOutcome> extract_batch(const std::vector<std::string_view>& cots);

  ChatRequest request(std::string_view cot) const;
  ChatRequest retry_request(std::string_view cot, std::string_view bad_reply, std::string_view error) const;

 private:
  LlmClient& client_;
  ExtractorConfig config_;
};

struct NodeSpan {
  std::string node_id;
  std::size_t start = 0;  // character offsets, [start, end)
  std::size_t end = 0;
  double match_score = 0.0;
  friend bool operator==(const NodeSpan&, const NodeSpan&) = default;
};

struct AlignmentResult {
  std::vector<NodeSpan> spans;         // sorted by start, tiling the CoT tail
  std::vector<std::string> unaligned;  // node ids whose quote cleared no window
};

struct AlignmentOptions {
  std::size_t ngram = 3;
  double threshold = 0.5;
};

/// Multiset Jaccard similarity of word n-grams (n shrinks to the shorter input
/// length when either side has fewer than n words).
double ngram_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t n);

/// Lower-cased whitespace-separated words with their character offsets.
struct Word {
  std::string text;
  std::size_t start = 0;
};
std::vector<Word> split_words(std::string_view text);

/// Aligns each quote to the CoT by sliding a window of the quote's word length
/// over the CoT words. Quotes are processed in reply order and each search
/// starts after the previous accepted window, so spans follow node numbering.
/// The earliest window with the maximal score is accepted if the score reaches
/// the threshold; each span runs to the next accepted span (or the CoT end).
AlignmentResult align_quotes(std::string_view cot, const std::vector<NodeQuote>& quotes,
                             const AlignmentOptions& options = {});

struct ExtractionRecord {
  std::string trace_id;
  std::string status;  // "ok" or "failed"
  std::string error;
  std::string dot;
  std::vector<NodeQuote> node_quotes;
  std::vector<BranchRef> branches;
  std::vector<NodeSpan> spans;
  std::vector<std::string> unaligned;
  std::string raw_reply;
};

/// extractions.jsonl: {"trace_id","dot","node_quotes","branches","spans",...}
void write_extractions_jsonl(const std::vector<ExtractionRecord>& records, const std::filesystem::path& path);
std::vector<ExtractionRecord> read_extractions_jsonl(const std::filesystem::path& path);

}  // namespace cotscope
