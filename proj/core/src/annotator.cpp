#include "cotscope/annotator.hpp"

#include <algorithm>
#include <cctype>

#include "cotscope/errors.hpp"
#include "cotscope/utf8.hpp"
#include "io.hpp"

namespace cotscope {

std::string_view to_string(Activity a) { return a == Activity::Review ? "review" : "progress"; }

std::string_view to_string(Motivation m) {
  switch (m) {
    case Motivation::Clear: return "clear";
    case Motivation::Semiclear: return "semiclear";
    case Motivation::Unclear: return "unclear";
  }
  return "unclear";
}

namespace {

// Lower-cased letters only, so "Semi-clear." and "**REVIEW**" normalize cleanly.
std::string letters_only(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalpha(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (std::isspace(static_cast<unsigned char>(c))) out += ' ';
  }
  return out;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

constexpr const char* kActivitySystem =
    "You annotate chunks of a reasoning model's chain of thought. Label the TARGET chunk with the "
    "activity it performs:\n"
    "- progress: advances the active reasoning frontier, producing information that later steps rely on.\n"
    "- review: reads, checks, restates, deletes, or rewinds existing material without advancing the frontier.\n"
    "The chunks before and after the target are context only; do not label them.\n"
    "Answer with exactly one word: progress or review.";

constexpr const char* kMotivationSystem =
    "You annotate review chunks of a reasoning model's chain of thought. Rate the motivation stated in "
    "the TARGET chunk:\n"
    "- clear: The chunk states a review action (verify / re-check / backtrack / reread\xE2\x80\xA6) and cites a "
    "specific trigger / rationale for that action, such as a rule number, mismatch, explicit ambiguity, "
    "or other concrete evidence.\n"
    "- semiclear: The chunk states a review action and gives only a generic reason (\xE2\x80\x9Cmake sure "
    "it\xE2\x80\x99s correct\xE2\x80\x9D, \xE2\x80\x9Csomething seems off\xE2\x80\x9D, \xE2\x80\x9Cto be "
    "safe\xE2\x80\x9D) with no concrete trigger.\n"
    "- unclear: The chunk shows a review action but gives no stated rationale at all; the motive must not "
    "be inferred.\n"
    "The chunks before and after the target are context only.\n"
    "Answer with exactly one word: clear, semiclear, or unclear.";

std::string context_prompt(const std::vector<Chunk>& chunks, std::size_t target, std::size_t window) {
  const std::size_t lo = target >= window ? target - window : 0;
  const std::size_t hi = std::min(chunks.size(), target + window + 1);
  std::string out;
  if (lo < target) {
    out += "Preceding chunks:\n";
    for (std::size_t i = lo; i < target; ++i) out += "[" + std::to_string(i) + "] " + chunks[i].text + "\n";
    out += "\n";
  }
  out += "TARGET chunk [" + std::to_string(target) + "]:\n<<<\n" + chunks[target].text + "\n>>>\n";
  if (target + 1 < hi) {
    out += "\nFollowing chunks:\n";
    for (std::size_t i = target + 1; i < hi; ++i) out += "[" + std::to_string(i) + "] " + chunks[i].text + "\n";
  }
  return out;
}

}  // namespace

std::optional<Activity> parse_activity_reply(std::string_view reply) {
  const auto w = words(letters_only(reply));
  if (w.empty()) return std::nullopt;
  // First word decides; a lone label anywhere in a short reply is also accepted.
  if (w.front() == "progress") return Activity::Progress;
  if (w.front() == "review") return Activity::Review;
  const bool has_p = std::find(w.begin(), w.end(), "progress") != w.end();
  const bool has_r = std::find(w.begin(), w.end(), "review") != w.end();
  if (w.size() <= 6 && has_p != has_r) return has_p ? Activity::Progress : Activity::Review;
  return std::nullopt;
}

std::optional<Motivation> parse_motivation_reply(std::string_view reply) {
  auto w = words(letters_only(reply));
  if (w.empty()) return std::nullopt;
  // Re-join a split "semi clear".
  std::string first = w.front();
  if (first == "semi" && w.size() > 1 && w[1] == "clear") first = "semiclear";
  if (first == "clear") return Motivation::Clear;
  if (first == "semiclear") return Motivation::Semiclear;
  if (first == "unclear") return Motivation::Unclear;
  return std::nullopt;
}

Annotator::Annotator(LlmClient& client, JudgeConfig config) : client_(client), config_(std::move(config)) {}

const char* Annotator::activity_retry_instruction() {
  return "Your reply could not be parsed. Answer with exactly one word: progress or review.";
}

const char* Annotator::motivation_retry_instruction() {
  return "Your reply could not be parsed. Answer with exactly one word: clear, semiclear, or unclear.";
}

ChatRequest Annotator::activity_request(const std::vector<Chunk>& chunks, std::size_t target) const {
  ChatRequest req;
  req.model_id = config_.model_id;
  req.temperature = config_.temperature;
  req.top_p = config_.top_p;
  req.messages = {{"system", kActivitySystem}, {"user", context_prompt(chunks, target, config_.context_window)}};
  return req;
}

ChatRequest Annotator::motivation_request(const std::vector<Chunk>& chunks, std::size_t target) const {
  ChatRequest req;
  req.model_id = config_.model_id;
  req.temperature = config_.temperature;
  req.top_p = config_.top_p;
  req.messages = {{"system", kMotivationSystem}, {"user", context_prompt(chunks, target, config_.context_window)}};
  return req;
}

ChatRequest Annotator::retry_request(ChatRequest original, std::string_view bad_reply, std::string_view instruction) {
  original.messages.push_back({"assistant", std::string(bad_reply)});
  original.messages.push_back({"user", std::string(instruction)});
  return original;
}

namespace {

// Runs one labeling pass over `targets`, retrying unparseable replies once.
// `apply(i, reply)` returns false when the reply does not parse.
template <typename Parse, typename Apply, typename Fallback>
void run_labeling(LlmClient& client, const std::vector<ChatRequest>& requests, const std::vector<std::size_t>& targets,
                  const char* retry_instruction, Parse parse, Apply apply, Fallback fallback, AnnotationRun& run) {
  auto first = client.send_batch(requests);
  run.calls += requests.size();
  std::vector<std::size_t> retry_slots;
  std::vector<ChatRequest> retries;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (!first[k].ok()) {
      run.errors.push_back("chunk " + std::to_string(targets[k]) + ": " + first[k].error);
      fallback(targets[k], "transport_error: " + first[k].error);
      continue;
    }
    if (auto label = parse(*first[k].text)) {
      apply(targets[k], *label);
    } else {
      retry_slots.push_back(k);
      retries.push_back(Annotator::retry_request(requests[k], *first[k].text, retry_instruction));
    }
  }
  if (retries.empty()) return;
  auto second = client.send_batch(retries);
  run.calls += retries.size();
  for (std::size_t r = 0; r < retries.size(); ++r) {
    const std::size_t target = targets[retry_slots[r]];
    if (!second[r].ok()) {
      run.errors.push_back("chunk " + std::to_string(target) + ": " + second[r].error);
      fallback(target, "transport_error: " + second[r].error);
    } else if (auto label = parse(*second[r].text)) {
      apply(target, *label);
    } else {
      ++run.defaulted;
      fallback(target, "defaulted");
    }
  }
}

}  // namespace

AnnotationRun Annotator::label_activity(const std::vector<Chunk>& chunks) {
  AnnotationRun run;
  run.annotations.resize(chunks.size());
  std::vector<ChatRequest> requests;
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    run.annotations[i].chunk_index = i;
    requests.push_back(activity_request(chunks, i));
    targets.push_back(i);
  }
  run_labeling(
      client_, requests, targets, activity_retry_instruction(), parse_activity_reply,
      [&](std::size_t i, Activity a) { run.annotations[i].activity = a; },
      [&](std::size_t i, std::string flag) {
        run.annotations[i].activity = Activity::Progress;
        run.annotations[i].flag = std::move(flag);
      },
      run);
  return run;
}

AnnotationRun Annotator::label_motivation(const std::vector<Chunk>& chunks, std::vector<ChunkAnnotation> annotations) {
  if (annotations.size() != chunks.size()) throw ValidationError("annotations do not match chunks");
  AnnotationRun run;
  run.annotations = std::move(annotations);
  std::vector<ChatRequest> requests;
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (run.annotations[i].activity != Activity::Review) continue;
    requests.push_back(motivation_request(chunks, i));
    targets.push_back(i);
  }
  if (targets.empty()) return run;
  run_labeling(
      client_, requests, targets, motivation_retry_instruction(), parse_motivation_reply,
      [&](std::size_t i, Motivation m) { run.annotations[i].motivation = m; },
      [&](std::size_t i, std::string flag) {
        run.annotations[i].motivation = Motivation::Unclear;
        run.annotations[i].flag = std::move(flag);
      },
      run);
  return run;
}

LexicalMetrics lexical_metrics(const Trace& trace, const std::vector<Chunk>& chunks,
                               const std::vector<ChunkAnnotation>& annotations) {
  if (chunks.size() != annotations.size()) throw ValidationError("trace " + trace.id + ": annotation count mismatch");
  LexicalMetrics m;
  m.length_chars = utf8::char_count(trace.cot);

  std::vector<const ChunkAnnotation*> by_chunk(chunks.size(), nullptr);
  for (const auto& a : annotations) {
    if (a.chunk_index >= chunks.size() || by_chunk[a.chunk_index])
      throw ValidationError("trace " + trace.id + ": bad or duplicate chunk index in annotations");
    by_chunk[a.chunk_index] = &a;
  }

  std::size_t review_chars = 0;
  std::size_t review_chunks = 0;
  std::size_t switches = 0;
  double motivation_weighted = 0.0;
  bool motivation_complete = true;
  std::vector<double> midpoints;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const auto& a = *by_chunk[i];
    if (a.activity == Activity::Review) {
      review_chars += chunks[i].length();
      ++review_chunks;
      midpoints.push_back(0.5 * static_cast<double>(chunks[i].start + chunks[i].end));
      if (a.motivation) {
        const double w = *a.motivation == Motivation::Clear ? 1.0 : *a.motivation == Motivation::Semiclear ? 0.5 : 0.0;
        motivation_weighted += w * static_cast<double>(chunks[i].length());
      } else {
        motivation_complete = false;
      }
      if (i + 1 < chunks.size() && by_chunk[i + 1]->activity == Activity::Progress) ++switches;
    }
  }

  const double n_chunks = static_cast<double>(chunks.size());
  if (m.length_chars > 0) m.review_ratio = static_cast<double>(review_chars) / static_cast<double>(m.length_chars);
  if (!chunks.empty()) {
    m.review_chunk_fraction = static_cast<double>(review_chunks) / n_chunks;
    m.switch_count_norm = static_cast<double>(switches) / n_chunks;
  }
  if (review_chunks > 0 && m.length_chars > 0) {
    std::sort(midpoints.begin(), midpoints.end());
    const std::size_t k = midpoints.size();
    const double median = k % 2 == 1 ? midpoints[k / 2] : 0.5 * (midpoints[k / 2 - 1] + midpoints[k / 2]);
    m.review_centroid = median / static_cast<double>(m.length_chars);
    if (motivation_complete && review_chars > 0) m.motivation_score = motivation_weighted / static_cast<double>(review_chars);
  }
  return m;
}

ConfusionMatrix confusion_matrix(const std::vector<Chunk>& chunks, const std::vector<Activity>& reference,
                                 const std::vector<Activity>& predicted) {
  if (chunks.size() != reference.size() || chunks.size() != predicted.size())
    throw ValidationError("confusion matrix inputs differ in length");
  std::size_t rr = 0, rp = 0, pr = 0, pp = 0;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    const std::size_t len = chunks[i].length();
    const bool truth_review = reference[i] == Activity::Review;
    const bool pred_review = predicted[i] == Activity::Review;
    (truth_review ? (pred_review ? rr : rp) : (pred_review ? pr : pp)) += len;
  }
  ConfusionMatrix cm;
  cm.total_chars = rr + rp + pr + pp;
  if (cm.total_chars == 0) return cm;
  const double total = static_cast<double>(cm.total_chars);
  cm.review_as_review = static_cast<double>(rr) / total;
  cm.review_as_progress = static_cast<double>(rp) / total;
  cm.progress_as_review = static_cast<double>(pr) / total;
  cm.progress_as_progress = static_cast<double>(pp) / total;
  return cm;
}

void write_annotations_jsonl(const AnnotationsByTrace& annotations, const std::filesystem::path& path) {
  std::string out;
  for (const auto& [trace_id, list] : annotations) {
    for (const auto& a : list) {
      io::json j;
      j["trace_id"] = trace_id;
      j["chunk_index"] = a.chunk_index;
      j["activity"] = std::string(to_string(a.activity));
      if (a.motivation) j["motivation"] = std::string(to_string(*a.motivation));
      if (a.flag) j["flag"] = *a.flag;
      out += io::dump(j);
      out += '\n';
    }
  }
  io::write_file_atomic(path, out);
}

AnnotationsByTrace read_annotations_jsonl(const std::filesystem::path& path) {
  AnnotationsByTrace out;
  io::for_each_line(path, [&](std::size_t line, std::string_view text) {
    try {
      const auto j = io::json::parse(text);
      ChunkAnnotation a;
      a.chunk_index = j.at("chunk_index").get<std::size_t>();
      const auto act = j.at("activity").get<std::string>();
      if (act == "review") a.activity = Activity::Review;
      else if (act == "progress") a.activity = Activity::Progress;
      else throw ValidationError("unknown activity '" + act + "'");
      if (auto it = j.find("motivation"); it != j.end() && !it->is_null()) {
        auto m = parse_motivation_reply(it->get<std::string>());
        if (!m) throw ValidationError("unknown motivation");
        a.motivation = m;
      }
      if (a.motivation && a.activity != Activity::Review)
        throw ValidationError("motivation on a progress chunk");
      if (auto it = j.find("flag"); it != j.end() && !it->is_null()) a.flag = it->get<std::string>();
      out[j.at("trace_id").get<std::string>()].push_back(std::move(a));
    } catch (const std::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace cotscope
