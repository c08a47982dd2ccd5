#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cotscope/corpus.hpp"
#include "cotscope/extractor.hpp"
#include "cotscope/graph.hpp"
#include "cotscope/llm_client.hpp"

namespace cotscope {

// ---------------------------------------------------------------- selection

enum class Selector { FSF, Length, ReviewRatio, Random };
enum class Direction { LowerBetter, HigherBetter };

std::string_view to_string(Selector s);
Selector parse_selector(std::string_view name);
std::string_view to_string(Direction d);
Direction parse_direction(std::string_view name);

/// Per-selector ranking direction with optional per-model overrides.
struct DirectionMap {
  std::map<Selector, Direction> defaults;
  std::map<std::string, std::map<Selector, Direction>> per_model;

  /// Lower is better everywhere; review ratio flips for claude-3.7-sonnet.
  static DirectionMap standard();
  Direction resolve(Selector s, std::string_view model_id) const;
};

struct Candidate {
  std::string trace_id;
  bool correct = false;
  std::optional<double> fsf;
  std::optional<double> length;
  std::optional<double> review_ratio;

  std::optional<double> value(Selector s) const;
};

/// splitmix64 step, used to derive independent per-cell seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Uniform integer in [0, n) by rejection sampling, so results do not depend on
/// the standard library's distribution implementation.
std::size_t uniform_below(std::mt19937_64& rng, std::size_t n);

/// Index (into `pool`) of the best candidate. Defined values beat undefined ones;
/// ties go to the smallest trace id. Random draws uniformly using `rng`.
std::size_t rank_select(const std::vector<const Candidate*>& pool, Selector selector, Direction direction,
                        std::mt19937_64& rng);
std::size_t rank_select(const std::vector<Candidate>& pool, Selector selector, Direction direction,
                        std::mt19937_64& rng);

struct Problem {
  std::string question_id;
  std::vector<Candidate> candidates;
};

struct SelectionEntry {
  std::string model_id;
  Selector selector = Selector::Random;
  Direction direction = Direction::LowerBetter;
  double pass1_mean = 0.0;
  double pass1_sd = 0.0;
  std::size_t replicates = 0;
  std::size_t pool_size = 0;  // largest candidate pool among the problems
  std::size_t problems = 0;
  std::uint64_t seed = 0;
};

struct BootstrapOptions {
  std::size_t replicates = 200;
  std::uint64_t seed = 0;
};

/// Each replicate resamples every problem's pool with replacement, selects the
/// top-1 and averages its correctness over problems. The resample for
/// (problem j, replicate b) depends only on (seed, j, b), so all selectors see
/// the same resamples. Reports mean and sample sd across replicates.
SelectionEntry bootstrap_pass1(const std::vector<Problem>& problems, Selector selector, Direction direction,
                               const BootstrapOptions& options = {});

struct SelectionReport {
  std::vector<SelectionEntry> entries;
  std::size_t nominal_pool_size = 64;
};

/// selection.csv: model,selector,direction,pass1_mean,pass1_sd,B,pool_size,problems,seed
void write_selection_csv(const SelectionReport& report, const std::filesystem::path& path);

// ------------------------------------------------------------------ editing

enum class BranchChoice { First, Last };
enum class EditVariant { Original, Reduced, ReducedWithSummary };

std::string_view to_string(BranchChoice c);
std::string_view to_string(EditVariant v);
BranchChoice parse_branch_choice(std::string_view name);
EditVariant parse_edit_variant(std::string_view name);

/// A failed branch whose nodes were aligned to the CoT; [cut_start, cut_end) in characters.
struct AlignedBranch {
  BranchRef ref;
  std::size_t cut_start = 0;
  std::size_t cut_end = 0;
};

struct BranchScreening {
  std::vector<AlignedBranch> eligible;  // ordered by the failed node's span start
  std::vector<std::string> rejected;    // "failed_id: reason"
};

/// The cut runs from the first aligned node after the branch start on the
/// shortest start->failed path (the failed node itself if there is no such
/// path) to the end of the failed node's span.
BranchScreening eligible_branches(const ReasoningGraph& graph, const std::vector<BranchRef>& branches,
                                  const std::vector<NodeSpan>& spans);

struct EditPlan {
  std::string trace_id;
  BranchChoice branch_choice = BranchChoice::First;
  EditVariant variant = EditVariant::Original;
  BranchRef branch;
  std::size_t cut_start = 0;
  std::size_t cut_end = 0;
  std::optional<std::string> summary_text;
  std::string partial_cot;
};

/// Throws ValidationError when no branch is eligible, or when the summary
/// variant is requested without a summary.
EditPlan plan_edit(std::string_view trace_id, std::string_view cot, const std::vector<AlignedBranch>& eligible,
                   BranchChoice choice, EditVariant variant, const std::optional<std::string>& summary = std::nullopt);

/// The abandoned-branch summary prompt (temperature 0).
const std::string& summary_prompt();
ChatRequest summary_request(std::string_view branch_text, std::string_view model_id);

// ------------------------------------------------------------- continuation

/// How a partial CoT is re-fed: {prompt} and {partial_cot} are substituted; the
/// assistant prefill is sent as a trailing assistant message.
struct ContinuationTemplate {
  std::string user = "{prompt}";
  std::string assistant_prefill = "<think>\n{partial_cot}";
};

struct ContinuationConfig {
  std::string model_id = "continuation";
  double temperature = 0.6;
  double top_p = 0.9;
  std::optional<int> max_tokens;
  ContinuationTemplate default_template;
  std::map<std::string, ContinuationTemplate> per_model;  // keyed by trace model id

  const ContinuationTemplate& template_for(std::string_view trace_model) const;
};

ChatRequest continuation_request(const Question& question, std::string_view partial_cot,
                                 const ContinuationTemplate& tmpl, const ContinuationConfig& config);

struct ContinuationOutcome {
  std::size_t requested = 0;
  std::size_t graded = 0;
  std::size_t correct = 0;
  std::vector<std::string> errors;  // one per ungraded sample
  bool replay_miss = false;

  std::size_t ungraded() const { return requested - graded; }
  /// correct / graded; undefined when nothing was graded.
  std::optional<double> accuracy() const;
};

/// k samples (indices 0..k-1) from the partial CoT, each graded against the
/// question. Throws ValidationError for k = 0.
ContinuationOutcome continuation_accuracy(LlmClient& client, const Question& question, std::string_view partial_cot,
                                          const ContinuationTemplate& tmpl, const ContinuationConfig& config,
                                          std::size_t k = 8);

struct EditRecord {
  EditPlan plan;
  ContinuationOutcome outcome;
};

/// edits.jsonl, one plan per line with its continuation counts and accuracy.
void write_edits_jsonl(const std::vector<EditRecord>& records, const std::filesystem::path& path);

// ------------------------------------------------------------------ entropy

inline constexpr std::string_view kConclusionElicitor =
    "I have thought long enough. Now let me conclude: the final answer is";

/// Natural-log entropy of the empirical distribution of `answers`.
double empirical_entropy(const std::vector<std::string>& answers);

/// H_0 minus the mean of the remaining entries. Needs at least two entries.
double progressiveness(const std::vector<double>& entropies);

/// The first floor(n * (1 - f)) characters, a blank line, then the elicitor.
std::string truncate_with_elicitor(std::string_view cot, double fraction);

struct EntropyProfile {
  std::string trace_id;
  std::vector<double> fractions;
  std::vector<std::optional<double>> entropies;  // undefined when no sample returned
  std::vector<std::size_t> unparsed;              // per checkpoint
  std::vector<std::size_t> failed;                // transport failures per checkpoint
  std::optional<double> progressiveness;
};

EntropyProfile truncation_entropy(LlmClient& client, const Question& question, const Trace& trace,
                                  const ContinuationConfig& config,
                                  const std::vector<double>& fractions = {0.0, 0.25, 0.5, 0.75}, std::size_t k = 8);

/// entropy.csv: trace_id,model,fraction,entropy,unparsed,failed,progressiveness
void write_entropy_csv(const std::vector<std::pair<std::string, EntropyProfile>>& profiles_by_model,
                       const std::filesystem::path& path);

}  // namespace cotscope
