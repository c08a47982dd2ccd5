#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cotscope/errors.hpp"
#include "cotscope/pipeline.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string questions;
  std::string traces;
  std::string out;
  std::string cache;
  std::string keywords;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
  bool offline = false;
  bool spearman = false;
};

void add_common(CLI::App& cmd, Overrides& o) {
  cmd.add_option("-c,--config", o.config, "Run configuration (JSON)");
  cmd.add_option("--questions", o.questions, "questions.jsonl");
  cmd.add_option("--traces", o.traces, "traces.jsonl");
  cmd.add_option("-o,--out", o.out, "Output directory");
  cmd.add_option("--cache", o.cache, "Response cache directory");
  cmd.add_option("--keywords", o.keywords, "Keyword table, one keyword per line");
  cmd.add_option("--seed", o.seed, "Seed for selection bootstrap and random selector");
  cmd.add_option("-j,--jobs", o.jobs, "Maximum concurrent model calls");
  cmd.add_flag("--offline", o.offline, "Serve every model call from the cache");
  cmd.add_flag("--spearman", o.spearman, "Rank-based conditional correlation");
}

cotscope::RunConfig resolve(const Overrides& o) {
  namespace fs = std::filesystem;
  cotscope::RunConfig c;
  if (!o.config.empty()) c = cotscope::load_run_config(o.config);
  auto abs = [](const std::string& p) { return fs::absolute(p).lexically_normal(); };
  if (!o.questions.empty()) c.questions = abs(o.questions);
  if (!o.traces.empty()) c.traces = abs(o.traces);
  if (!o.out.empty()) c.out_dir = abs(o.out);
  if (!o.cache.empty()) c.cache_dir = abs(o.cache);
  if (!o.keywords.empty()) c.keywords = abs(o.keywords);
  if (o.seed) c.seed = *o.seed;
  if (o.jobs) c.max_concurrency = *o.jobs;
  if (o.offline) c.offline = true;
  if (o.spearman) c.spearman = true;
  if (c.out_dir.empty()) throw cotscope::ValidationError("config.out_dir: required (set it or pass --out)");
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chain-of-thought metrics, statistics and interventions"};
  app.set_version_flag("--version", cotscope::version_string());
  app.require_subcommand(1, 1);

  Overrides overrides;
  std::string chosen;
  auto stages = cotscope::Pipeline::stages();
  stages.push_back("pipeline");
  for (const auto& name : stages) {
    auto* cmd = app.add_subcommand(name, name == "pipeline" ? "Run every stage in order" : "Run the " + name + " stage");
    add_common(*cmd, overrides);
    cmd->callback([&chosen, name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    cotscope::Pipeline pipeline(resolve(overrides));
    pipeline.run(chosen);
    return 0;
  } catch (const cotscope::UpstreamMissingError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const cotscope::ProviderError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const cotscope::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
