#include "cotscope/interventions.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "cotscope/grading.hpp"
#include "cotscope/utf8.hpp"
#include "io.hpp"

namespace cotscope {

namespace {

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = text.find(from, pos)) != std::string::npos) {
    text.replace(pos, from.size(), to);
    pos += to.size();
  }
  return text;
}

}  // namespace

std::string_view to_string(Selector s) {
  switch (s) {
    case Selector::FSF: return "fsf";
    case Selector::Length: return "length";
    case Selector::ReviewRatio: return "review_ratio";
    case Selector::Random: return "random";
  }
  return "?";
}

Selector parse_selector(std::string_view name) {
  for (auto s : {Selector::FSF, Selector::Length, Selector::ReviewRatio, Selector::Random}) {
    if (to_string(s) == name) return s;
  }
  throw ValidationError("unknown selector: " + std::string(name));
}

std::string_view to_string(Direction d) { return d == Direction::LowerBetter ? "lower" : "higher"; }

Direction parse_direction(std::string_view name) {
  if (name == "lower") return Direction::LowerBetter;
  if (name == "higher") return Direction::HigherBetter;
  throw ValidationError("unknown direction: " + std::string(name) + " (expected lower|higher)");
}

DirectionMap DirectionMap::standard() {
  DirectionMap m;
  for (auto s : {Selector::FSF, Selector::Length, Selector::ReviewRatio, Selector::Random})
    m.defaults[s] = Direction::LowerBetter;
  m.per_model["claude-3.7-sonnet"][Selector::ReviewRatio] = Direction::HigherBetter;
  return m;
}

Direction DirectionMap::resolve(Selector s, std::string_view model_id) const {
  if (auto it = per_model.find(std::string(model_id)); it != per_model.end()) {
    if (auto jt = it->second.find(s); jt != it->second.end()) return jt->second;
  }
  if (auto it = defaults.find(s); it != defaults.end()) return it->second;
  return Direction::LowerBetter;
}

std::optional<double> Candidate::value(Selector s) const {
  switch (s) {
    case Selector::FSF: return fsf;
    case Selector::Length: return length;
    case Selector::ReviewRatio: return review_ratio;
    case Selector::Random: return std::nullopt;
  }
  return std::nullopt;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::size_t uniform_below(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw ValidationError("uniform_below: empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

std::size_t rank_select(const std::vector<const Candidate*>& pool, Selector selector, Direction direction,
                        std::mt19937_64& rng) {
  if (pool.empty()) throw ValidationError("rank_select: empty candidate pool");
  if (selector == Selector::Random) return uniform_below(rng, pool.size());

  std::size_t best = 0;
  auto better = [&](const Candidate& a, const Candidate& b) {
    const auto va = a.value(selector), vb = b.value(selector);
    if (va.has_value() != vb.has_value()) return va.has_value();
    if (va && *va != *vb) return direction == Direction::LowerBetter ? *va < *vb : *va > *vb;
    return a.trace_id < b.trace_id;
  };
  for (std::size_t i = 1; i < pool.size(); ++i) {
    if (better(*pool[i], *pool[best])) best = i;
  }
  return best;
}

std::size_t rank_select(const std::vector<Candidate>& pool, Selector selector, Direction direction,
                        std::mt19937_64& rng) {
  std::vector<const Candidate*> ptrs;
  ptrs.reserve(pool.size());
  for (const auto& c : pool) ptrs.push_back(&c);
  return rank_select(ptrs, selector, direction, rng);
}

SelectionEntry bootstrap_pass1(const std::vector<Problem>& problems, Selector selector, Direction direction,
                               const BootstrapOptions& options) {
  SelectionEntry e;
  e.selector = selector;
  e.direction = direction;
  e.replicates = options.replicates;
  e.seed = options.seed;
  e.problems = problems.size();
  for (const auto& p : problems) e.pool_size = std::max(e.pool_size, p.candidates.size());
  if (problems.empty() || options.replicates == 0) return e;

  std::vector<double> rep(options.replicates, 0.0);
  std::vector<const Candidate*> sample;
  for (std::size_t j = 0; j < problems.size(); ++j) {
    const auto& pool = problems[j].candidates;
    if (pool.empty()) throw ValidationError("bootstrap_pass1: problem " + problems[j].question_id + " has no candidates");
    const std::uint64_t problem_seed = splitmix64(options.seed ^ splitmix64(j));
    for (std::size_t b = 0; b < options.replicates; ++b) {
      std::mt19937_64 rng(splitmix64(problem_seed ^ splitmix64(b + 0x5bd1e995ULL)));
      sample.clear();
      for (std::size_t i = 0; i < pool.size(); ++i) sample.push_back(&pool[uniform_below(rng, pool.size())]);
      const auto pick = rank_select(sample, selector, direction, rng);
      rep[b] += sample[pick]->correct ? 1.0 : 0.0;
    }
  }
  for (auto& r : rep) r /= static_cast<double>(problems.size());
  const double mean = std::accumulate(rep.begin(), rep.end(), 0.0) / static_cast<double>(rep.size());
  double ss = 0.0;
  for (double r : rep) ss += (r - mean) * (r - mean);
  e.pass1_mean = mean;
  e.pass1_sd = rep.size() > 1 ? std::sqrt(ss / static_cast<double>(rep.size() - 1)) : 0.0;
  return e;
}

void write_selection_csv(const SelectionReport& report, const std::filesystem::path& path) {
  std::string out = "model,selector,direction,pass1_mean,pass1_sd,B,pool_size,problems,seed\n";
  for (const auto& e : report.entries) {
    out += io::csv_escape(e.model_id) + ',' + std::string(to_string(e.selector)) + ',' +
           std::string(to_string(e.direction)) + ',' + io::format_double(e.pass1_mean) + ',' +
           io::format_double(e.pass1_sd) + ',' + std::to_string(e.replicates) + ',' + std::to_string(e.pool_size) +
           ',' + std::to_string(e.problems) + ',' + std::to_string(e.seed) + '\n';
  }
  io::write_file_atomic(path, out);
}

// ------------------------------------------------------------------ editing

std::string_view to_string(BranchChoice c) { return c == BranchChoice::First ? "first" : "last"; }

std::string_view to_string(EditVariant v) {
  switch (v) {
    case EditVariant::Original: return "original";
    case EditVariant::Reduced: return "reduced";
    case EditVariant::ReducedWithSummary: return "reduced_with_summary";
  }
  return "?";
}

BranchChoice parse_branch_choice(std::string_view name) {
  if (name == "first") return BranchChoice::First;
  if (name == "last") return BranchChoice::Last;
  throw ValidationError("unknown branch choice: " + std::string(name));
}

EditVariant parse_edit_variant(std::string_view name) {
  for (auto v : {EditVariant::Original, EditVariant::Reduced, EditVariant::ReducedWithSummary}) {
    if (to_string(v) == name) return v;
  }
  throw ValidationError("unknown edit variant: " + std::string(name));
}

namespace {

// Shortest path by BFS, neighbours in id order; empty if unreachable.
std::vector<std::size_t> bfs_path(const ReasoningGraph& g, std::size_t from, std::size_t to) {
  const std::size_t n = g.nodes.size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& [a, b] : g.edges) {
    const auto ia = g.index_of(a), ib = g.index_of(b);
    if (ia && ib) adj[*ia].push_back(*ib);
  }
  for (auto& row : adj) {
    std::sort(row.begin(), row.end(), [&](std::size_t x, std::size_t y) { return g.nodes[x].id < g.nodes[y].id; });
    row.erase(std::unique(row.begin(), row.end()), row.end());
  }
  std::vector<std::optional<std::size_t>> parent(n);
  std::vector<bool> seen(n, false);
  std::deque<std::size_t> queue{from};
  seen[from] = true;
  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop_front();
    if (v == to) break;
    for (auto w : adj[v]) {
      if (!seen[w]) {
        seen[w] = true;
        parent[w] = v;
        queue.push_back(w);
      }
    }
  }
  if (!seen[to]) return {};
  std::vector<std::size_t> path{to};
  while (path.back() != from) path.push_back(*parent[path.back()]);
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace

BranchScreening eligible_branches(const ReasoningGraph& graph, const std::vector<BranchRef>& branches,
                                  const std::vector<NodeSpan>& spans) {
  BranchScreening out;
  auto span_of = [&](const std::string& id) -> const NodeSpan* {
    for (const auto& s : spans)
      if (s.node_id == id) return &s;
    return nullptr;
  };
  std::vector<std::pair<std::size_t, AlignedBranch>> ordered;
  for (const auto& b : branches) {
    const auto* failed = span_of(b.failed_node_id);
    const auto* start = span_of(b.branch_start_node_id);
    const auto fi = graph.index_of(b.failed_node_id), si = graph.index_of(b.branch_start_node_id);
    if (!fi || !si) {
      out.rejected.push_back(b.failed_node_id + ": node not in graph");
      continue;
    }
    if (!failed || !start) {
      out.rejected.push_back(b.failed_node_id + ": " + (failed ? b.branch_start_node_id : b.failed_node_id) +
                             " is not aligned");
      continue;
    }
    std::size_t cut_start = failed->start;
    const auto path = bfs_path(graph, *si, *fi);
    for (std::size_t i = 1; i < path.size(); ++i) {
      if (const auto* s = span_of(graph.nodes[path[i]].id)) {
        cut_start = s->start;
        break;
      }
    }
    if (cut_start >= failed->end) {
      out.rejected.push_back(b.failed_node_id + ": empty branch span");
      continue;
    }
    ordered.push_back({failed->start, AlignedBranch{b, cut_start, failed->end}});
  }
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [pos, branch] : ordered) out.eligible.push_back(std::move(branch));
  return out;
}

EditPlan plan_edit(std::string_view trace_id, std::string_view cot, const std::vector<AlignedBranch>& eligible,
                   BranchChoice choice, EditVariant variant, const std::optional<std::string>& summary) {
  if (eligible.empty()) throw ValidationError("trace " + std::string(trace_id) + " has no aligned failed branch");
  const auto& branch = choice == BranchChoice::First ? eligible.front() : eligible.back();
  if (branch.cut_start >= branch.cut_end)
    throw ValidationError("trace " + std::string(trace_id) + ": empty branch span");
  EditPlan plan;
  plan.trace_id = std::string(trace_id);
  plan.branch_choice = choice;
  plan.variant = variant;
  plan.branch = branch.ref;
  plan.cut_start = branch.cut_start;
  plan.cut_end = branch.cut_end;
  switch (variant) {
    case EditVariant::Original:
      plan.partial_cot = utf8::slice(cot, 0, branch.cut_end);
      break;
    case EditVariant::Reduced:
      plan.partial_cot = utf8::slice(cot, 0, branch.cut_start);
      break;
    case EditVariant::ReducedWithSummary: {
      if (!summary) throw ValidationError("reduced_with_summary needs a summary for trace " + std::string(trace_id));
      std::string s = *summary;
      const auto b = s.find_first_not_of(" \t\r\n");
      const auto e = s.find_last_not_of(" \t\r\n");
      s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      plan.summary_text = s;
      plan.partial_cot = std::string(utf8::slice(cot, 0, branch.cut_start)) + s + "\n\n";
      break;
    }
  }
  return plan;
}

const std::string& summary_prompt() {
  static const std::string prompt =
      "Summarize the following abandoned reasoning attempt in 2\xE2\x80\x93"
      "3 sentences, stating what was tried and why it failed";
  return prompt;
}

ChatRequest summary_request(std::string_view branch_text, std::string_view model_id) {
  ChatRequest req;
  req.model_id = std::string(model_id);
  req.temperature = 0.0;
  req.top_p = 1.0;
  req.messages = {{"user", summary_prompt() + ".\n\n" + std::string(branch_text)}};
  return req;
}

// ------------------------------------------------------------- continuation

const ContinuationTemplate& ContinuationConfig::template_for(std::string_view trace_model) const {
  if (auto it = per_model.find(std::string(trace_model)); it != per_model.end()) return it->second;
  return default_template;
}

ChatRequest continuation_request(const Question& question, std::string_view partial_cot,
                                 const ContinuationTemplate& tmpl, const ContinuationConfig& config) {
  const std::string prompt = render_prompt(question);
  ChatRequest req;
  req.model_id = config.model_id;
  req.temperature = config.temperature;
  req.top_p = config.top_p;
  req.max_tokens = config.max_tokens;
  auto fill = [&](const std::string& t) {
    // partial_cot first so a literal "{prompt}" inside the CoT is left alone.
    const auto at = t.find("{partial_cot}");
    if (at == std::string::npos) return replace_all(t, "{prompt}", prompt);
    return replace_all(t.substr(0, at), "{prompt}", prompt) + std::string(partial_cot) +
           replace_all(t.substr(at + 13), "{prompt}", prompt);
  };
  req.messages.push_back({"user", fill(tmpl.user)});
  if (!tmpl.assistant_prefill.empty()) req.messages.push_back({"assistant", fill(tmpl.assistant_prefill)});
  return req;
}

std::optional<double> ContinuationOutcome::accuracy() const {
  if (graded == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(graded);
}

ContinuationOutcome continuation_accuracy(LlmClient& client, const Question& question, std::string_view partial_cot,
                                          const ContinuationTemplate& tmpl, const ContinuationConfig& config,
                                          std::size_t k) {
  if (k == 0) throw ValidationError("continuation_accuracy: k must be positive");
  const auto req = continuation_request(question, partial_cot, tmpl, config);
  std::vector<LlmClient::BatchItem> items;
  for (std::size_t i = 0; i < k; ++i) items.push_back({req, static_cast<int>(i)});
  const auto results = client.send_batch(items);
  ContinuationOutcome out;
  out.requested = k;
  for (const auto& r : results) {
    if (!r.ok()) {
      out.errors.push_back(r.error);
      out.replay_miss = out.replay_miss || r.replay_miss;
      continue;
    }
    ++out.graded;
    if (grade_text(*r.text, "", question).correct) ++out.correct;
  }
  return out;
}

void write_edits_jsonl(const std::vector<EditRecord>& records, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : records) {
    const auto& p = r.plan;
    io::json j;
    j["trace_id"] = p.trace_id;
    j["branch_choice"] = to_string(p.branch_choice);
    j["variant"] = to_string(p.variant);
    j["failed_node_id"] = p.branch.failed_node_id;
    j["branch_start_node_id"] = p.branch.branch_start_node_id;
    j["cut_span"] = {p.cut_start, p.cut_end};
    j["summary_text"] = p.summary_text ? io::json(*p.summary_text) : io::json(nullptr);
    j["partial_cot"] = p.partial_cot;
    j["k"] = r.outcome.requested;
    j["graded"] = r.outcome.graded;
    j["correct"] = r.outcome.correct;
    j["ungraded"] = r.outcome.ungraded();
    const auto acc = r.outcome.accuracy();
    j["accuracy"] = acc ? io::json(*acc) : io::json(nullptr);
    if (!r.outcome.errors.empty()) j["errors"] = r.outcome.errors;
    out += io::dump(j);
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

// ------------------------------------------------------------------ entropy

double empirical_entropy(const std::vector<std::string>& answers) {
  if (answers.empty()) throw ValidationError("empirical_entropy: no answers");
  std::map<std::string, std::size_t> counts;
  for (const auto& a : answers) ++counts[a];
  const double n = static_cast<double>(answers.size());
  double h = 0.0;
  for (const auto& [answer, c] : counts) {
    if (c == answers.size()) return 0.0;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double progressiveness(const std::vector<double>& entropies) {
  if (entropies.size() < 2) throw ValidationError("progressiveness needs at least two checkpoints");
  double sum = 0.0;
  for (std::size_t t = 1; t < entropies.size(); ++t) sum += entropies[t];
  return entropies[0] - sum / static_cast<double>(entropies.size() - 1);
}

std::string truncate_with_elicitor(std::string_view cot, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ValidationError("truncation fraction must lie in [0, 1)");
  const std::size_t n = utf8::char_count(cot);
  const auto keep = static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - fraction)));
  return std::string(utf8::slice(cot, 0, std::min(keep, n))) + "\n\n" + std::string(kConclusionElicitor);
}

EntropyProfile truncation_entropy(LlmClient& client, const Question& question, const Trace& trace,
                                  const ContinuationConfig& config, const std::vector<double>& fractions,
                                  std::size_t k) {
  if (k == 0) throw ValidationError("truncation_entropy: k must be positive");
  if (fractions.empty()) throw ValidationError("truncation_entropy: no truncation fractions");
  const auto& tmpl = config.template_for(trace.model_id);
  std::vector<LlmClient::BatchItem> items;
  for (double f : fractions) {
    const auto req = continuation_request(question, truncate_with_elicitor(trace.cot, f), tmpl, config);
    for (std::size_t i = 0; i < k; ++i) items.push_back({req, static_cast<int>(i)});
  }
  const auto results = client.send_batch(items);

  EntropyProfile p;
  p.trace_id = trace.id;
  p.fractions = fractions;
  bool all_defined = true;
  std::vector<double> defined;
  for (std::size_t c = 0; c < fractions.size(); ++c) {
    std::vector<std::string> answers;
    std::size_t unparsed = 0, failed = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const auto& r = results[c * k + i];
      if (!r.ok()) {
        if (r.replay_miss) throw ProviderError(r.error);
        ++failed;
        continue;
      }
      answers.push_back(answer_bucket(*r.text, question));
      if (answers.back() == "unparsed") ++unparsed;
    }
    p.unparsed.push_back(unparsed);
    p.failed.push_back(failed);
    if (answers.empty()) {
      p.entropies.push_back(std::nullopt);
      all_defined = false;
    } else {
      p.entropies.push_back(empirical_entropy(answers));
      defined.push_back(*p.entropies.back());
    }
  }
  if (all_defined && defined.size() >= 2) p.progressiveness = progressiveness(defined);
  return p;
}

void write_entropy_csv(const std::vector<std::pair<std::string, EntropyProfile>>& profiles_by_model,
                       const std::filesystem::path& path) {
  std::string out = "trace_id,model,fraction,entropy,unparsed,failed,progressiveness\n";
  for (const auto& [model, p] : profiles_by_model) {
    for (std::size_t c = 0; c < p.fractions.size(); ++c) {
      out += io::csv_escape(p.trace_id) + ',' + io::csv_escape(model) + ',' + io::format_double(p.fractions[c]) + ',' +
             (p.entropies[c] ? io::format_double(*p.entropies[c]) : std::string()) + ',' +
             std::to_string(p.unparsed[c]) + ',' + std::to_string(p.failed[c]) + ',' +
             (p.progressiveness ? io::format_double(*p.progressiveness) : std::string()) + '\n';
    }
  }
  io::write_file_atomic(path, out);
}

}  // namespace cotscope
