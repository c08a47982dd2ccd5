// Builds the end-to-end fixture: a small corpus whose model calls are answered
// by a scripted transport, recorded into a replay cache for offline runs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cotscope/interventions.hpp"
#include "cotscope/llm_client.hpp"
#include "cotscope/pipeline.hpp"
#include "cotscope/synthetic.hpp"

namespace fs = std::filesystem;
using namespace cotscope;

namespace {

struct FixtureQuestion {
  std::string id;
  std::string difficulty;
  int a = 0, b = 0;
  std::string prompt() const {
    return "Compute " + std::to_string(a) + " + " + std::to_string(b) + ".";
  }
  int gold() const { return a + b; }
};

struct Step {
  std::string id;
  std::string text;
  bool failed = false;
  bool review = false;
};

struct FixtureTrace {
  std::string id;
  std::string question_id;
  std::string model;
  std::string cot;
  std::string final_answer;
  std::string extraction_reply;
};

std::string first_words(const std::string& text, std::size_t n) {
  std::istringstream in(text);
  std::string w, out;
  for (std::size_t i = 0; i < n && in >> w; ++i) out += (i ? " " : "") + w;
  return out;
}

std::string json_str(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out += c;
  }
  return out + "\"";
}

FixtureTrace build_trace(const FixtureQuestion& q, const std::string& model, std::size_t index, std::mt19937_64& rng) {
  const int failures = static_cast<int>(uniform_below(rng, 4));
  const bool correct = synthetic::uniform01(rng) < 0.85 - 0.22 * failures;
  const int answer = correct ? q.gold() : q.gold() + 1 + static_cast<int>(uniform_below(rng, 3));
  const int partial = q.a + q.b / 2;

  std::vector<Step> steps;
  std::size_t s = 0, f = 0;
  auto success = [&](std::string text) { steps.push_back({"S" + std::to_string(++s), std::move(text)}); };
  success("We need the sum of " + std::to_string(q.a) + " and " + std::to_string(q.b) +
          ". The problem gives two whole numbers and asks for their total.\n\n");
  success("Let me think about the structure: adding half of the second number first gives the partial value " +
          std::to_string(partial) + " for the running total.\n\n");
  for (int k = 0; k < failures; ++k) {
    const int guess = partial + 7 + k;
    steps.push_back({"F" + std::to_string(++f),
                     "Another approach is to guess the total as " + std::to_string(guess) +
                         " from the digit pattern alone, then test it against the running total we had.\n\n",
                     true});
    if (k % 2 == 0) {
      steps.push_back({"R" + std::to_string(f),
                       "Wait, the guess " + std::to_string(guess) + " does not match because the partial value " +
                           std::to_string(partial) + " was ignored, so that attempt is dropped.\n\n",
                       false, true});
    } else {
      steps.push_back({"R" + std::to_string(f),
                       "Let me verify the running total once more. The partial value is still " +
                           std::to_string(partial) + " here.\n\n",
                       false, true});
    }
  }
  success("So back to the main line: adding the remaining half of the second number, the final result is " +
          std::to_string(answer) + ".");

  FixtureTrace t;
  t.id = q.id + "-" + model + "-t" + std::to_string(index);
  t.question_id = q.id;
  t.model = model;
  for (const auto& st : steps) t.cot += st.text;
  t.final_answer = "The answer is $\\boxed{" + std::to_string(answer) + "}$.";

  std::string dot = "digraph G {\n  rankdir=TB;\n  node [style=filled];\n";
  dot += "  problem [label=\"Problem Statement\", fillcolor=lightblue];\n";
  for (const auto& st : steps) {
    dot += "  " + st.id + " [label=\"" + st.id + "\", fillcolor=" + (st.failed ? "lightpink" : "lightblue") + "];\n";
  }
  dot += "  answer [label=\"Final Answer\", fillcolor=lightblue];\n";
  std::string last_success = "problem";
  std::string branches;
  std::size_t branch_no = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& st = steps[i];
    if (st.failed) {
      dot += "  " + last_success + " -> " + st.id + ";\n";
      branches += std::to_string(++branch_no) + ". " + st.id + ", starts from node id \"" + last_success +
                  "\", fails to " + st.id + ".\n";
    } else if (st.review) {
      dot += "  " + steps[i - 1].id + " -> " + st.id + ";\n";
    } else {
      dot += "  " + last_success + " -> " + st.id + ";\n";
      last_success = st.id;
    }
  }
  dot += "  " + last_success + " -> answer;\n}\n";

  std::string quotes;
  std::size_t n = 0;
  for (const auto& st : steps) quotes += std::to_string(++n) + ". " + st.id + ": \"" + first_words(st.text, 20) + "\"\n";
  t.extraction_reply = "```dot\n" + dot + "```\n\nList of nodes with first 20 words:\n\n" + quotes +
                       (branches.empty() ? "" : "\nBranch Analysis:\n\n" + branches);
  return t;
}

// Answers every request the pipeline makes, deterministically.
class ScriptedTransport : public ChatTransport {
 public:
  ScriptedTransport(std::map<std::string, std::string> replies, std::map<std::string, int> gold)
      : replies_(std::move(replies)), gold_(std::move(gold)) {}

  std::string complete(const ChatRequest& req) override {
    std::lock_guard lock(mu_);
    const auto key = canonical_json(req);
    const int draw = seen_[key]++;
    const auto& first = req.messages.front().text;
    if (req.messages.front().role == "system") return judge(req, first);
    if (first.rfind(summary_prompt(), 0) == 0) return "Abandoned attempt: a digit-pattern guess was tried and dropped because it ignored the partial value.";
    if (const auto at = first.find("\n\nReasoning trace:\n"); at != std::string::npos) {
      auto it = replies_.find(first.substr(at + 19));
      if (it == replies_.end()) throw ProviderError("fixture: unknown trace");
      return it->second;
    }
    return continuation(req, key, draw);
  }

 private:
  static std::string target(const std::string& user) {
    const auto at = user.find("TARGET chunk [");
    const auto open = user.find("<<<\n", at);
    const auto close = user.find("\n>>>", open);
    return user.substr(open + 4, close - open - 4);
  }

  std::string judge(const ChatRequest& req, const std::string& system) {
    const auto chunk = target(req.messages.at(1).text);
    if (system.find("semiclear") != std::string::npos) {
      if (chunk.find("because") != std::string::npos) return "clear";
      return "unclear";
    }
    return chunk.rfind("Wait", 0) == 0 || chunk.rfind("Let me verify", 0) == 0 ? "REVIEW." : "progress";
  }

  std::string continuation(const ChatRequest& req, const std::string& key, int draw) {
    const auto& prompt = req.messages.front().text;
    int gold = 0;
    for (const auto& [p, g] : gold_)
      if (prompt.find(p) != std::string::npos) gold = g;
    const std::string partial = req.messages.size() > 1 ? req.messages.back().text : "";
    std::mt19937_64 rng(splitmix64(std::hash<std::string>{}(key) ^ static_cast<std::uint64_t>(draw)));
    if (partial.find(kConclusionElicitor) != std::string::npos) {
      static const std::regex final_re("the final result is (\\d+)");
      std::smatch m;
      if (std::regex_search(partial, m, final_re)) return " \\boxed{" + m[1].str() + "}";
      const double kept = static_cast<double>(partial.size()) / 900.0;
      if (synthetic::uniform01(rng) < 0.3 + kept) return " \\boxed{" + std::to_string(gold) + "}";
      return " \\boxed{" + std::to_string(gold + 1 + static_cast<int>(uniform_below(rng, 4))) + "}";
    }
    std::size_t failed = 0;
    for (std::size_t pos = 0; (pos = partial.find("Another approach", pos)) != std::string::npos; ++pos) ++failed;
    double p = 0.8 - 0.2 * static_cast<double>(failed);
    if (partial.find("Abandoned attempt") != std::string::npos) p -= 0.1;
    const bool ok = synthetic::uniform01(rng) < p;
    return "Adding the remaining part carefully gives the total.\n</think>\nThe answer is \\boxed{" +
           std::to_string(ok ? gold : gold + 2) + "}.";
  }

  std::mutex mu_;
  std::map<std::string, std::string> replies_;
  std::map<std::string, int> gold_;
  std::map<std::string, int> seen_;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regenerate the end-to-end replay fixture"};
  std::string dir = "tests/fixtures/pipeline";
  std::uint64_t seed = 2025;
  app.add_option("-d,--dir", dir, "Fixture directory");
  app.add_option("--seed", seed, "Generator seed");
  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path root = fs::absolute(dir);
    fs::remove_all(root / "cache");
    fs::create_directories(root);

    std::vector<FixtureQuestion> questions = {
        {"harp-0001", "level-3", 17, 26}, {"harp-0002", "level-4", 48, 35}, {"harp-0003", "level-5", 129, 64}};
    const std::vector<std::string> models = {"model-a", "model-b"};
    std::mt19937_64 rng(splitmix64(seed));
    std::map<std::string, std::string> replies;
    std::map<std::string, int> gold;
    std::ofstream qout(root / "questions.jsonl"), tout(root / "traces.jsonl");
    for (const auto& q : questions) {
      gold[q.prompt()] = q.gold();
      qout << "{\"id\":" << json_str(q.id) << ",\"dataset\":\"HARP\",\"difficulty\":" << json_str(q.difficulty)
           << ",\"prompt\":" << json_str(q.prompt()) << ",\"gold_answer\":\"" << q.gold() << "\"}\n";
      for (const auto& m : models) {
        for (std::size_t i = 0; i < 4; ++i) {
          const auto t = build_trace(q, m, i, rng);
          replies[t.cot] = t.extraction_reply;
          tout << "{\"id\":" << json_str(t.id) << ",\"question_id\":" << json_str(t.question_id)
               << ",\"model_id\":" << json_str(t.model) << ",\"temperature\":0.6,\"cot\":" << json_str(t.cot)
               << ",\"final_answer\":" << json_str(t.final_answer) << "}\n";
        }
      }
    }
    qout.close();
    tout.close();

    std::ofstream cfg(root / "config.json");
    cfg << R"({
  "questions": "questions.jsonl",
  "traces": "traces.jsonl",
  "cache_dir": "cache",
  "offline": true,
  "max_concurrency": 1,
  "seed": 7,
  "thresholds": {"min_rows": 8, "bootstrap_replicates": 200, "pool_size": 8, "continuations": 8},
  "entropy": {"fractions": [0, 0.25, 0.5, 0.75], "samples": 8, "max_traces": 3}
}
)";
    cfg.close();

    auto config = load_run_config(root / "config.json");
    config.offline = false;
    config.out_dir = fs::temp_directory_path() / "cotscope-fixturegen";
    fs::remove_all(config.out_dir);
    Pipeline pipeline(config, std::make_shared<ScriptedTransport>(replies, gold));
    pipeline.all();
    std::cout << "fixture written to " << root.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
