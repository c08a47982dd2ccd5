#pragma once

// Committed editing fixture: a CoT with two failed branches, its extractor
// reply, and a replay cache populated in-process with planted continuations.

#include <json.hpp>

#include <optional>
#include <string>

#include "cotscope/extractor.hpp"
#include "cotscope/interventions.hpp"
#include "support.hpp"

namespace testing::edit {

inline std::string fixture(const char* name) {
  return read_text(std::string(COTSCOPE_FIXTURE_DIR "/edit/") + name);
}

inline cotscope::Question question() {
  const auto j = nlohmann::json::parse(fixture("question.json"));
  cotscope::Question q;
  q.id = j.at("id");
  q.dataset = cotscope::parse_dataset(j.at("dataset").get<std::string>());
  q.difficulty = j.at("difficulty").get<std::string>();
  q.prompt = j.at("prompt");
  q.gold_answer = j.at("gold_answer");
  return q;
}

// CoT pieces, one per graph node.
inline const std::string S1 = "We want the smallest prime factor of 91.\n\n";
inline const std::string S2 = "Let me think about divisibility by small primes in order.\n\n";
inline const std::string F1 = "Another approach is to guess that 91 is prime since it looks prime.\n\n";
inline const std::string R1 = "Wait, 91 = 7 * 13 so it is not prime, that guess is dropped.\n\n";
inline const std::string S3 = "Check 2, 3 and 5 first: none of them divide 91.\n\n";
inline const std::string T1 = "Try the next prime 11 as a candidate divisor.\n\n";
inline const std::string F2 = "It fails since 11 * 8 = 88 and 11 * 9 = 99, so 11 does not divide 91.\n\n";
inline const std::string S4 = "So back to 7: 7 * 13 = 91, so the smallest prime factor is 7.";

inline const std::string kSummaryFirst = "Guessing that 91 is prime failed because 91 = 7 * 13.";
inline const std::string kSummaryLast = "Testing 11 as a divisor failed because 91 is not a multiple of 11.";

struct Cell {
  cotscope::BranchChoice choice;
  cotscope::EditVariant variant;
  int correct;  // planted correct continuations out of 8
  std::string expected_prefix;
};

inline std::vector<Cell> cells() {
  using cotscope::BranchChoice;
  using cotscope::EditVariant;
  return {{BranchChoice::First, EditVariant::Original, 3, S1 + S2 + F1},
          {BranchChoice::First, EditVariant::Reduced, 6, S1 + S2},
          {BranchChoice::First, EditVariant::ReducedWithSummary, 7, S1 + S2 + kSummaryFirst + "\n\n"},
          {BranchChoice::Last, EditVariant::Original, 2, S1 + S2 + F1 + R1 + S3 + T1 + F2},
          {BranchChoice::Last, EditVariant::Reduced, 5, S1 + S2 + F1 + R1 + S3},
          {BranchChoice::Last, EditVariant::ReducedWithSummary, 5, S1 + S2 + F1 + R1 + S3 + kSummaryLast + "\n\n"}};
}

struct Fixture {
  std::string cot = fixture("cot.txt");
  cotscope::ExtractionResult extraction = cotscope::parse_extraction_reply(fixture("extraction_reply.txt"));
  cotscope::AlignmentResult alignment = cotscope::align_quotes(cot, extraction.node_quotes);
  cotscope::BranchScreening screening =
      cotscope::eligible_branches(extraction.graph, extraction.branches, alignment.spans);

  const cotscope::AlignedBranch& branch(cotscope::BranchChoice c) const {
    return c == cotscope::BranchChoice::First ? screening.eligible.front() : screening.eligible.back();
  }
  std::string branch_text(cotscope::BranchChoice c) const {
    const auto& b = branch(c);
    return cot.substr(b.cut_start, b.cut_end - b.cut_start);
  }

  /// Plan for a cell; the summary variant fetches its summary through `client`.
  cotscope::EditPlan plan(cotscope::LlmClient& client, const Cell& cell) const {
    std::optional<std::string> summary;
    if (cell.variant == cotscope::EditVariant::ReducedWithSummary)
      summary = client.send(cotscope::summary_request(branch_text(cell.choice), "judge"));
    return cotscope::plan_edit("fx", cot, screening.eligible, cell.choice, cell.variant, summary);
  }

  /// Writes the summaries and 8 continuations per cell into the client's cache.
  void populate(cotscope::LlmClient& client, const cotscope::ContinuationConfig& cfg) const {
    const auto& cache = client.cache();
    for (auto c : {cotscope::BranchChoice::First, cotscope::BranchChoice::Last}) {
      const auto req = cotscope::summary_request(branch_text(c), "judge");
      cache.put(cotscope::cache_key(req, 0), req, 0, c == cotscope::BranchChoice::First ? kSummaryFirst : kSummaryLast);
    }
    const auto q = question();
    for (const auto& cell : cells()) {
      const auto req = cotscope::continuation_request(q, plan(client, cell).partial_cot, cfg.default_template, cfg);
      for (int i = 0; i < 8; ++i) {
        cache.put(cotscope::cache_key(req, i), req, i,
                  std::string("</think>\nThe answer is \\boxed{") + (i < cell.correct ? "7" : "13") + "}.");
      }
    }
  }
};

}  // namespace testing::edit
