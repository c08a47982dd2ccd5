#include "cotscope/extractor.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <regex>

#include "cotscope/utf8.hpp"
#include "io.hpp"

namespace cotscope {

namespace {

constexpr const char* kGraphPrompt = R"(Parse the reasoning trace into a Graphviz diagram. Focus on these essentials:

Node Rules:
- One node per distinct reasoning step
- 'fillcolor=lightblue': Successful reasoning steps
- 'fillcolor=lightpink': Failed attempts

Edge Rules:
- Connect node A → node B if the information or insight from A is actually used to construct the reasoning in B; branch new attempts from their starting ancestor, not from dead ends.

Requirements:
- Use 'rankdir=TB'
- Include ALL attempts (including failures), do not miss any steps in the reasoning.
- ALWAYS start with a "problem statement" node
- ALWAYS end with a "final answer" node
- Do NOT reorder or reorganize the reasoning flow

Generate complete Graphviz DOT code in dot blocks.)";

constexpr const char* kQuoteAndBranchPrompt = R"(Additionally, provide a separate list with the exact format below:

List of nodes with first 20 words:

1. node id: "exact first 20 words of this reasoning step"

2. node id: "exact first 20 words of this reasoning step"

3. node id: "exact first 20 words of this reasoning step"

...

Requirements:

- Use numbered list format: "number. node id: "quoted text""

- Each entry must be on a single line

- Preserve exact formatting, punctuation, line breaks, and special characters from the original reasoning trace

- Use double quotes around the 20-word excerpts; the 20-word should be exactly the first 20 words of the reasoning step.

- Node IDs should match exactly with the DOT code node names

- This list should enable precise string matching back to the original reasoning trace

Example format:

1. problem statement: "Solve the following math problem efficiently and clearly. Please reason step by step, and put your final answer within $\boxed{answer}$."

2. analysis step: "First, let me understand what we're given. We have a triangle with specific angle measures and need to find the missing side length."

After these, for each failed attempts you have labeled as lightpink, tract the entire reasoning branch, also provide:

Branch Analysis:

1. node id, starts from node id "name", fails to current node id.

The definition: For each failed reasoning attempt (pink node), identify the most recent successful node (blue node) from which this failed path originally diverged, marking that successful node as the branch starting point where alternative reasoning paths split off.
The next reasoning step after the current failed attempt should directly starts again from the node just before this branching starting point.)";

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n*`");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n*`");
  return s.substr(b, e - b + 1);
}

// Strips straight or curly quotes around an id.
std::string unquote_id(std::string_view s) {
  s = trim(s);
  auto strip = [&](std::string_view open, std::string_view close) {
    if (s.size() >= open.size() + close.size() && s.substr(0, open.size()) == open &&
        s.substr(s.size() - close.size()) == close) {
      s = trim(s.substr(open.size(), s.size() - open.size() - close.size()));
      return true;
    }
    return false;
  };
  while (strip("\"", "\"") || strip("\xE2\x80\x9C", "\xE2\x80\x9D") || strip("'", "'")) {
  }
  return std::string(s);
}

std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    out.push_back(text.substr(start, end - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

std::optional<NodeQuote> parse_quote_line(std::string_view line) {
  static const std::regex numbered(R"(^\s*(\d+)\.\s*(.*)$)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(line.begin(), line.end(), m, numbered)) return std::nullopt;
  const std::string rest = m[2].str();
  std::size_t colon = std::string::npos;
  std::size_t open_len = 0;
  for (std::string_view open : {std::string_view(": \""), std::string_view(": \xE2\x80\x9C"), std::string_view(":\"")}) {
    const auto c = rest.find(open);
    if (c != std::string::npos && c < colon) {
      colon = c;
      open_len = open.size();
    }
  }
  if (colon == std::string::npos) return std::nullopt;
  std::string_view quote = std::string_view(rest).substr(colon + open_len);
  quote = trim(quote);
  for (std::string_view close : {std::string_view("\""), std::string_view("\xE2\x80\x9D")}) {
    if (quote.size() >= close.size() && quote.substr(quote.size() - close.size()) == close) {
      quote.remove_suffix(close.size());
      break;
    }
  }
  NodeQuote q;
  q.number = std::stoul(m[1].str());
  q.node_id = unquote_id(std::string_view(rest).substr(0, colon));
  q.quote = std::string(quote);
  return q;
}

std::optional<BranchRef> parse_branch_line(std::string_view line) {
  static const std::regex branch(
      R"re(^\s*\d+\.\s*(.*?)\s*,\s*starts?\s+from\s+(?:node\s+id\s+)?(.+?)\s*,\s*fails?\s+to\s+(?:current\s+node\s+id\s+)?(.+?)\s*\.?\s*$)re",
      std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(line.begin(), line.end(), m, branch)) return std::nullopt;
  BranchRef b;
  b.branch_start_node_id = unquote_id(m[2].str());
  b.failed_node_id = unquote_id(m[3].str());
  if (b.failed_node_id.empty()) b.failed_node_id = unquote_id(m[1].str());
  return b;
}

// Resolves an id as written in the lists to a graph node id.
std::optional<std::string> resolve_id(const ReasoningGraph& g, const std::string& id) {
  if (g.find(id)) return id;
  const auto lid = lower(id);
  for (const auto& n : g.nodes) {
    if (lower(n.id) == lid) return n.id;
  }
  return std::nullopt;
}

}  // namespace

const std::string& extraction_prompt() {
  static const std::string prompt = std::string(kGraphPrompt) + "\n\n" + kQuoteAndBranchPrompt;
  return prompt;
}

ExtractionResult parse_extraction_reply(std::string_view reply) {
  ExtractionResult r;
  r.raw_reply = std::string(reply);
  auto block = find_digraph_block(reply);
  if (!block) throw ValidationError("reply contains no digraph block");
  r.dot = std::string(*block);
  r.graph = parse_dot(*block);

  enum class Section { None, Quotes, Branches } section = Section::None;
  for (auto line : lines(reply)) {
    const auto l = lower(line);
    if (l.find("list of nodes with first 20 words") != std::string::npos) {
      section = Section::Quotes;
      continue;
    }
    if (l.find("branch analysis") != std::string::npos) {
      section = Section::Branches;
      continue;
    }
    if (l.find("```") != std::string::npos) continue;
    if (section == Section::Quotes) {
      if (auto q = parse_quote_line(line)) {
        auto id = resolve_id(r.graph, q->node_id);
        if (!id) throw ValidationError("quoted node id " + q->node_id + " is not a node of the graph");
        q->node_id = *id;
        r.node_quotes.push_back(std::move(*q));
      }
    } else if (section == Section::Branches) {
      if (auto b = parse_branch_line(line)) {
        auto failed = resolve_id(r.graph, b->failed_node_id);
        if (!failed) throw ValidationError("branch failed node " + b->failed_node_id + " is not a node of the graph");
        auto start = resolve_id(r.graph, b->branch_start_node_id);
        if (!start)
          throw ValidationError("branch start node " + b->branch_start_node_id + " is not a node of the graph");
        if (r.graph.find(*failed)->status != NodeStatus::Failed)
          throw ValidationError("branch failed node " + *failed + " is not marked failed (lightpink)");
        r.branches.push_back({*failed, *start});
      }
    }
  }
  return r;
}

Extractor::Extractor(LlmClient& client, ExtractorConfig config) : client_(client), config_(std::move(config)) {}

ChatRequest Extractor::request(std::string_view cot) const {
  ChatRequest req;
  req.model_id = config_.model_id;
  req.temperature = config_.temperature;
  req.top_p = config_.top_p;
  req.messages = {{"user", extraction_prompt() + "\n\nReasoning trace:\n" + std::string(cot)}};
  return req;
}

ChatRequest Extractor::retry_request(std::string_view cot, std::string_view bad_reply, std::string_view error) const {
  ChatRequest req = request(cot);
  req.messages.push_back({"assistant", std::string(bad_reply)});
  req.messages.push_back({"user", "Your reply could not be used: " + std::string(error) +
                                      "\nRegenerate the complete answer (DOT block, node list and branch analysis) "
                                      "in the required format."});
  return req;
}

ExtractionOutcome Extractor::extract(std::string_view cot) { return extract_batch({cot}).front(); }

std::vector<ExtractionOutcome> Extractor::extract_batch(const std::vector<std::string_view>& cots) {
  std::vector<ExtractionOutcome> out(cots.size());
  std::vector<ChatRequest> first;
  for (auto cot : cots) first.push_back(request(cot));
  auto replies = client_.send_batch(first);

  std::vector<std::size_t> retry_slots;
  std::vector<ChatRequest> retries;
  for (std::size_t i = 0; i < cots.size(); ++i) {
    out[i].attempts = 1;
    if (!replies[i].ok()) {
      out[i].error = replies[i].error;
      out[i].provider_failure = true;
      continue;
    }
    try {
      out[i].result = parse_extraction_reply(*replies[i].text);
    } catch (const ValidationError& e) {
      retry_slots.push_back(i);
      retries.push_back(retry_request(cots[i], *replies[i].text, e.what()));
    }
  }
  if (retries.empty()) return out;
  auto second = client_.send_batch(retries);
  for (std::size_t r = 0; r < retries.size(); ++r) {
    auto& o = out[retry_slots[r]];
    o.attempts = 2;
    if (!second[r].ok()) {
      o.error = second[r].error;
      o.provider_failure = true;
      continue;
    }
    try {
      o.result = parse_extraction_reply(*second[r].text);
    } catch (const ValidationError& e) {
      o.error = e.what();
    }
  }
  return out;
}

std::vector<Word> split_words(std::string_view text) {
  const auto chars = utf8::byte_to_char_table(text);
  std::vector<Word> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= text.size()) break;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    Word w;
    w.text = lower(text.substr(start, i - start));
    w.start = chars[start];
    out.push_back(std::move(w));
  }
  return out;
}

namespace {

using Gram = std::uint64_t;

std::vector<Gram> gram_hashes(const std::vector<std::string>& words, std::size_t n) {
  std::vector<Gram> out;
  if (words.size() < n || n == 0) return out;
  std::vector<Gram> word_hash(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) word_hash[i] = std::hash<std::string>{}(words[i]);
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    Gram h = 1469598103934665603ULL;
    for (std::size_t k = 0; k < n; ++k) h = (h ^ word_hash[i + k]) * 1099511628211ULL + k;
    out.push_back(h);
  }
  return out;
}

// Multiset Jaccard of two sorted hash lists.
double sorted_jaccard(const std::vector<Gram>& a, const std::vector<Gram>& b) {
  std::size_t i = 0, j = 0, inter = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) {
      ++inter;
      ++i;
      ++j;
    } else if (a[i] < b[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

double ngram_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b, std::size_t n) {
  n = std::min({n, a.size(), b.size()});
  if (n == 0) return 0.0;
  auto ga = gram_hashes(a, n), gb = gram_hashes(b, n);
  std::sort(ga.begin(), ga.end());
  std::sort(gb.begin(), gb.end());
  return sorted_jaccard(ga, gb);
}

AlignmentResult align_quotes(std::string_view cot, const std::vector<NodeQuote>& quotes, const AlignmentOptions& options) {
  AlignmentResult result;
  const auto cot_words = split_words(cot);
  std::vector<std::string> cot_text;
  cot_text.reserve(cot_words.size());
  for (const auto& w : cot_words) cot_text.push_back(w.text);

  std::size_t search_from = 0;  // first word index a window may start at
  for (const auto& q : quotes) {
    std::vector<std::string> qwords;
    for (auto& w : split_words(q.quote)) qwords.push_back(std::move(w.text));
    const std::size_t len = qwords.size();
    if (len == 0 || cot_text.empty() || search_from >= cot_text.size()) {
      result.unaligned.push_back(q.node_id);
      continue;
    }
    const std::size_t window = std::min(len, cot_text.size());
    const std::size_t n = std::min(options.ngram, window);
    auto qgrams = gram_hashes(qwords, std::min(n, len));
    std::sort(qgrams.begin(), qgrams.end());
    const auto all = gram_hashes(cot_text, n);

    double best = -1.0;
    std::size_t best_start = 0;
    const std::size_t grams_per_window = window - n + 1;
    std::vector<Gram> wgrams;
    for (std::size_t s = search_from; s + window <= cot_text.size(); ++s) {
      wgrams.assign(all.begin() + static_cast<std::ptrdiff_t>(s),
                    all.begin() + static_cast<std::ptrdiff_t>(s + grams_per_window));
      std::sort(wgrams.begin(), wgrams.end());
      const double score = sorted_jaccard(qgrams, wgrams);
      if (score > best) {
        best = score;
        best_start = s;
      }
    }
    if (best < options.threshold) {
      result.unaligned.push_back(q.node_id);
      continue;
    }
    result.spans.push_back({q.node_id, cot_words[best_start].start, 0, best});
    search_from = best_start + 1;
  }
  const std::size_t total = utf8::char_count(cot);
  for (std::size_t i = 0; i < result.spans.size(); ++i) {
    result.spans[i].end = i + 1 < result.spans.size() ? result.spans[i + 1].start : total;
  }
  return result;
}

void write_extractions_jsonl(const std::vector<ExtractionRecord>& records, const std::filesystem::path& path) {
  std::string out;
  for (const auto& r : records) {
    io::json j;
    j["trace_id"] = r.trace_id;
    j["status"] = r.status;
    if (!r.error.empty()) j["error"] = r.error;
    j["dot"] = r.dot;
    io::json quotes = io::json::array();
    for (const auto& q : r.node_quotes) quotes.push_back({{"number", q.number}, {"node_id", q.node_id}, {"quote", q.quote}});
    j["node_quotes"] = std::move(quotes);
    io::json branches = io::json::array();
    for (const auto& b : r.branches)
      branches.push_back({{"failed_node_id", b.failed_node_id}, {"branch_start_node_id", b.branch_start_node_id}});
    j["branches"] = std::move(branches);
    io::json spans = io::json::array();
    for (const auto& s : r.spans)
      spans.push_back({{"node_id", s.node_id}, {"start", s.start}, {"end", s.end}, {"match_score", s.match_score}});
    j["spans"] = std::move(spans);
    j["unaligned"] = r.unaligned;
    j["raw_reply"] = r.raw_reply;
    out += io::dump(j);
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

std::vector<ExtractionRecord> read_extractions_jsonl(const std::filesystem::path& path) {
  std::vector<ExtractionRecord> out;
  io::for_each_line(path, [&](std::size_t line, std::string_view text) {
    try {
      const auto j = io::json::parse(text);
      ExtractionRecord r;
      r.trace_id = j.at("trace_id").get<std::string>();
      r.status = j.value("status", "ok");
      r.error = j.value("error", "");
      r.dot = j.value("dot", "");
      r.raw_reply = j.value("raw_reply", "");
      for (const auto& q : j.value("node_quotes", io::json::array()))
        r.node_quotes.push_back({q.at("number").get<std::size_t>(), q.at("node_id").get<std::string>(),
                                 q.at("quote").get<std::string>()});
      for (const auto& b : j.value("branches", io::json::array()))
        r.branches.push_back({b.at("failed_node_id").get<std::string>(), b.at("branch_start_node_id").get<std::string>()});
      for (const auto& s : j.value("spans", io::json::array()))
        r.spans.push_back({s.at("node_id").get<std::string>(), s.at("start").get<std::size_t>(),
                           s.at("end").get<std::size_t>(), s.at("match_score").get<double>()});
      r.unaligned = j.value("unaligned", std::vector<std::string>{});
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace cotscope
