#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "cotscope/corpus.hpp"

namespace cotscope {

struct GradeResult {
  bool correct = false;
  bool unparsed = false;
  std::string extracted;  // canonical form of the extracted answer, empty when unparsed
};

/// Contents of the last \boxed{...} (or \fbox{...}) in `text`, braces balanced.
std::optional<std::string> last_boxed(std::string_view text);

/// Canonical form used for answer equality: latex wrappers and spacing commands
/// stripped, whitespace removed, and integers / fractions / terminating decimals
/// reduced to "p" or "p/q" in lowest terms. Anything else is compared literally.
std::string normalize_answer(std::string_view answer);

/// Free-form math grading against the question's gold answer. The last boxed
/// expression of final_answer is used, falling back to the CoT.
GradeResult grade_math(const Trace& trace, const Question& question);

/// Option-letter grading. Templates are tried in order:
///   "correct answer is (X)", "correct answer is X", "answer is (X)",
///   then the last standalone option letter on the last non-empty line.
GradeResult grade_multiple_choice(const Trace& trace, const Question& question);

/// Extracts an option letter from free text using the templates above.
std::optional<char> extract_choice_letter(std::string_view text, std::size_t n_choices);

/// Gold letter for a multiple-choice question: a bare letter ("B", "(B)") or the
/// verbatim text of one of the choices.
char gold_choice_letter(const Question& question);

/// Dispatches on question type.
GradeResult grade(const Trace& trace, const Question& question);

/// Grades an arbitrary response text (e.g. a continuation) as if it were a trace.
GradeResult grade_text(std::string_view response, std::string_view cot_fallback, const Question& question);

/// Answer key used by the entropy probe: canonical answer, or "unparsed".
std::string answer_bucket(std::string_view response, const Question& question);

/// Grades every trace, sets `correct`/`unparsed`, and records the unparsed
/// count and rate in corpus.provenance.
void grade_corpus(Corpus& corpus);

/// Generation prompt for a question, matching the benchmark templates the traces
/// were sampled with.
std::string render_prompt(const Question& question);

}  // namespace cotscope
