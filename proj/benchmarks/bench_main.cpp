#include <benchmark/benchmark.h>

#include <random>
#include <string>

#include "cotscope/chunker.hpp"
#include "cotscope/graph.hpp"
#include "cotscope/stats.hpp"
#include "cotscope/synthetic.hpp"

using namespace cotscope;

namespace {

std::string synthetic_cot(std::size_t words, std::uint64_t seed) {
  static const char* vocab[] = {"the", "sum", "Wait,", "so", "Let me verify", "carry", "Alternatively", "x", "=", "7"};
  std::mt19937_64 rng(seed);
  std::string s;
  for (std::size_t i = 0; i < words; ++i) {
    s += vocab[rng() % 10];
    s += ' ';
  }
  return s;
}

ReasoningGraph layered_graph(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ReasoningGraph g;
  for (std::size_t i = 0; i < n; ++i) {
    const bool failed = i > 0 && i + 1 < n && rng() % 4 == 0;
    g.nodes.push_back({"n" + std::to_string(i), "step", failed ? NodeStatus::Failed : NodeStatus::Success,
                       failed ? "lightpink" : "lightblue"});
    if (i > 0) g.edges.emplace_back("n" + std::to_string(rng() % i), "n" + std::to_string(i));
    if (i > 1 && rng() % 3 == 0) g.edges.emplace_back("n" + std::to_string(rng() % (i - 1)), "n" + std::to_string(i));
  }
  g.problem_node = "n0";
  g.answer_node = "n" + std::to_string(n - 1);
  return g;
}

void BM_Segment(benchmark::State& state) {
  const auto cot = synthetic_cot(static_cast<std::size_t>(state.range(0)), 1);
  const auto table = KeywordTable::defaults();
  for (auto _ : state) benchmark::DoNotOptimize(segment(cot, table));
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * cot.size()));
}
BENCHMARK(BM_Segment)->Arg(1000)->Arg(10000);

void BM_GraphMetrics(benchmark::State& state) {
  const auto g = layered_graph(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(compute_graph_metrics(g));
}
BENCHMARK(BM_GraphMetrics)->Arg(16)->Arg(64)->Arg(256);

void BM_ConditionalCorrelation(benchmark::State& state) {
  synthetic::PlantedOptions opt;
  opt.questions = static_cast<std::size_t>(state.range(0));
  const auto obs = synthetic::planted_corpus(opt);
  for (auto _ : state) benchmark::DoNotOptimize(conditional_correlation(obs, "fsf"));
}
BENCHMARK(BM_ConditionalCorrelation)->Arg(300);

void BM_Glmm(benchmark::State& state) {
  const auto sim = synthetic::simulate_glmm(static_cast<std::size_t>(state.range(0)), 16, 0.0, -0.5, 1.0, 3);
  for (auto _ : state) benchmark::DoNotOptimize(fit_glmm(sim.group, sim.x, sim.y));
}
BENCHMARK(BM_Glmm)->Arg(100)->Arg(300)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
