#pragma once

#include <algorithm>
#include <random>
#include <string>

#include "cotscope/graph.hpp"
#include "oracles/graph_oracle.hpp"

namespace testing {

/// Random DAG: nodes in a hidden topological order, shuffled ids, optional
/// duplicate edges, random statuses, and an answer node most of the time.
inline oracle::Graph random_dag(std::mt19937_64& rng, std::size_t max_nodes) {
  oracle::Graph g;
  g.n = 2 + rng() % (max_nodes - 1);
  std::vector<std::size_t> order(g.n);
  for (std::size_t i = 0; i < g.n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  g.failed.resize(g.n);
  for (std::size_t i = 0; i < g.n; ++i) g.failed[i] = rng() % 3 == 0;
  const double density = 0.1 + 0.5 * double(rng() % 100) / 100.0;
  for (std::size_t i = 0; i < g.n; ++i) {
    for (std::size_t j = i + 1; j < g.n; ++j) {
      if (double(rng() % 1000) / 1000.0 < density) {
        g.edges.emplace_back(order[i], order[j]);
        if (rng() % 10 == 0) g.edges.emplace_back(order[i], order[j]);
      }
    }
  }
  std::shuffle(g.edges.begin(), g.edges.end(), rng);
  g.problem = rng() % 4 == 0 ? order[rng() % g.n] : order[0];
  if (rng() % 5 != 0) {
    std::size_t a;
    do {
      a = rng() % 2 ? order[g.n - 1] : order[rng() % g.n];
    } while (a == g.problem);
    g.answer = a;
  }
  return g;
}

inline std::string node_name(std::size_t i) {
  // Names whose lexical order differs from numeric order.
  return "n" + std::to_string((i * 7919) % 1009);
}

inline cotscope::ReasoningGraph to_reasoning_graph(const oracle::Graph& g) {
  cotscope::ReasoningGraph r;
  for (std::size_t i = 0; i < g.n; ++i) {
    cotscope::GraphNode node;
    node.id = node_name(i);
    node.label = "step " + std::to_string(i);
    node.status = g.failed[i] ? cotscope::NodeStatus::Failed : cotscope::NodeStatus::Success;
    node.fillcolor = g.failed[i] ? "lightpink" : "lightblue";
    r.nodes.push_back(node);
  }
  for (auto [a, b] : g.edges) r.edges.emplace_back(node_name(a), node_name(b));
  r.problem_node = node_name(g.problem);
  if (g.answer) r.answer_node = node_name(*g.answer);
  return r;
}

inline std::vector<std::pair<std::string, std::optional<double>>> oracle_fields(const oracle::Metrics& m) {
  return {{"fsf", m.fsf},
          {"recovery_efficiency", m.recovery_efficiency},
          {"branching_quality", m.branching_quality},
          {"flow_coherence", m.flow_coherence},
          {"reasoning_depth", m.reasoning_depth},
          {"orphaned_steps", m.orphaned_steps},
          {"information_cascade", m.information_cascade},
          {"cross_reference_density", m.cross_reference_density},
          {"reasoning_efficiency", m.reasoning_efficiency},
          {"shortest_path_coverage", m.shortest_path_coverage},
          {"endpoint_reachability", m.endpoint_reachability},
          {"min_error_depth", m.min_error_depth},
          {"first_failed_step_depth", m.first_failed_step_depth},
          {"total_steps", m.total_steps},
          {"mean_out_degree", m.mean_out_degree},
          {"max_failed_children", m.max_failed_children}};
}

/// Name of the first field that differs, or empty when all match exactly.
inline std::string first_mismatch(const cotscope::GraphMetricVector& got, const oracle::Metrics& want) {
  const auto a = got.fields();
  const auto b = oracle_fields(want);
  if (a.size() != b.size()) return "field count";
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first) return "field order at " + a[i].first;
    if (a[i].second != b[i].second) return a[i].first;
  }
  return {};
}

}  // namespace testing
