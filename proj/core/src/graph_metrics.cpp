#include <algorithm>
#include <deque>
#include <numeric>
#include <set>

#include "cotscope/graph.hpp"

namespace cotscope {

std::optional<std::size_t> ReasoningGraph::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].id == id) return i;
  }
  return std::nullopt;
}

const GraphNode* ReasoningGraph::find(std::string_view id) const {
  auto i = index_of(id);
  return i ? &nodes[*i] : nullptr;
}

bool ReasoningGraph::is_anchor(std::string_view id) const {
  return id == problem_node || (answer_node && id == *answer_node);
}

bool ReasoningGraph::is_failed_step(std::size_t index) const {
  return nodes[index].status == NodeStatus::Failed && !is_anchor(nodes[index].id);
}

std::size_t ReasoningGraph::step_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [&](const GraphNode& n) { return !is_anchor(n.id); }));
}

std::size_t ReasoningGraph::failed_step_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) n += is_failed_step(i) ? 1 : 0;
  return n;
}

void ReasoningGraph::validate() const {
  std::set<std::string_view> ids;
  for (const auto& n : nodes) {
    if (!ids.insert(n.id).second) throw ValidationError("duplicate node id " + n.id);
  }
  for (const auto& [from, to] : edges) {
    if (!ids.count(from) || !ids.count(to)) throw ValidationError("edge " + from + " -> " + to + " references a missing node");
  }
  if (problem_node.empty() || !ids.count(problem_node)) throw ValidationError("reasoning graph has no problem node");
  if (answer_node && !ids.count(*answer_node)) throw ValidationError("answer node " + *answer_node + " does not exist");
  if (answer_node && *answer_node == problem_node) throw ValidationError("problem and answer anchors coincide");
}

namespace {

struct Adjacency {
  std::vector<std::vector<std::size_t>> out;  // distinct successors, sorted by node id
  std::vector<std::vector<std::size_t>> in;   // distinct predecessors
};

Adjacency build(const ReasoningGraph& g) {
  const std::size_t n = g.nodes.size();
  Adjacency adj;
  adj.out.resize(n);
  adj.in.resize(n);
  std::map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(g.nodes[i].id, i);
  for (const auto& [from, to] : g.edges) {
    const auto a = index.at(from), b = index.at(to);
    adj.out[a].push_back(b);
    adj.in[b].push_back(a);
  }
  for (std::size_t i = 0; i < n; ++i) {
    auto by_id = [&](std::size_t x, std::size_t y) { return g.nodes[x].id < g.nodes[y].id; };
    std::sort(adj.out[i].begin(), adj.out[i].end(), by_id);
    adj.out[i].erase(std::unique(adj.out[i].begin(), adj.out[i].end()), adj.out[i].end());
    std::sort(adj.in[i].begin(), adj.in[i].end());
    adj.in[i].erase(std::unique(adj.in[i].begin(), adj.in[i].end()), adj.in[i].end());
  }
  return adj;
}

std::vector<std::optional<std::size_t>> bfs(const std::vector<std::vector<std::size_t>>& adj, std::size_t source,
                                            std::vector<std::size_t>* parent = nullptr) {
  std::vector<std::optional<std::size_t>> dist(adj.size());
  if (parent) parent->assign(adj.size(), source);
  std::deque<std::size_t> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (auto v : adj[u]) {
      if (dist[v]) continue;
      dist[v] = *dist[u] + 1;
      if (parent) (*parent)[v] = u;
      queue.push_back(v);
    }
  }
  return dist;
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

std::vector<std::optional<std::size_t>> bfs_distances(const ReasoningGraph& g, std::size_t source) {
  return bfs(build(g).out, source);
}

std::optional<double> fsf(const ReasoningGraph& g) { return ratio(g.failed_step_count(), g.step_count()); }

std::vector<std::string> canonical_shortest_path(const ReasoningGraph& g) {
  if (!g.answer_node) return {};
  const auto adj = build(g);
  const auto p = *g.index_of(g.problem_node);
  const auto a = *g.index_of(*g.answer_node);
  std::vector<std::size_t> parent;
  const auto dist = bfs(adj.out, p, &parent);
  if (!dist[a]) return {};
  std::vector<std::string> path;
  for (std::size_t v = a;; v = parent[v]) {
    path.push_back(g.nodes[v].id);
    if (v == p) break;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

GraphMetricVector compute_graph_metrics(const ReasoningGraph& g) {
  GraphMetricVector m;
  const std::size_t n = g.nodes.size();
  if (n == 0) return m;
  const auto adj = build(g);
  const std::size_t p = *g.index_of(g.problem_node);
  const std::optional<std::size_t> a = g.answer_node ? g.index_of(*g.answer_node) : std::nullopt;
  const auto from_problem = bfs(adj.out, p);

  const std::size_t steps = g.step_count();
  m.fsf = fsf(g);
  m.total_steps = static_cast<double>(steps);

  // Failed nodes: mean distance to the nearest reachable success node.
  {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t f = 0; f < n; ++f) {
      if (!g.is_failed_step(f)) continue;
      const auto d = bfs(adj.out, f);
      std::optional<std::size_t> best;
      for (std::size_t v = 0; v < n; ++v) {
        if (v == f || !d[v] || g.is_failed_step(v)) continue;
        if (!best || *d[v] < *best) best = d[v];
      }
      if (best) {
        sum += static_cast<double>(*best);
        ++count;
      }
    }
    if (count > 0) m.recovery_efficiency = sum / static_cast<double>(count);
  }

  // Decision points (>=2 distinct successors) with at least one successful child.
  {
    std::size_t decisions = 0, good = 0;
    std::size_t max_failed = 0;
    std::size_t edges = 0;
    for (std::size_t u = 0; u < n; ++u) {
      edges += adj.out[u].size();
      std::size_t failed_children = 0;
      bool has_success_child = false;
      for (auto v : adj.out[u]) {
        if (g.is_failed_step(v)) ++failed_children;
        else has_success_child = true;
      }
      max_failed = std::max(max_failed, failed_children);
      if (adj.out[u].size() >= 2) {
        ++decisions;
        if (has_success_child) ++good;
      }
    }
    m.branching_quality = ratio(good, decisions);
    m.max_failed_children = static_cast<double>(max_failed);
    m.mean_out_degree = static_cast<double>(edges) / static_cast<double>(n);
  }

  // In-degree based ratios.
  {
    std::size_t orphans = 0, multi_input = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (adj.in[v].size() >= 2) ++multi_input;
      if (!g.is_anchor(g.nodes[v].id) && adj.in[v].empty()) ++orphans;
    }
    m.orphaned_steps = ratio(orphans, steps);
    m.cross_reference_density = ratio(multi_input, n);
  }

  // Mean number of distinct downstream nodes.
  {
    std::size_t total = 0;
    for (std::size_t v = 0; v < n; ++v) {
      const auto d = bfs(adj.out, v);
      total += static_cast<std::size_t>(std::count_if(d.begin(), d.end(), [](const auto& x) { return x.has_value(); })) - 1;
    }
    m.information_cascade = static_cast<double>(total) / static_cast<double>(n);
  }

  std::optional<std::size_t> min_fail;
  for (std::size_t v = 0; v < n; ++v) {
    if (g.is_failed_step(v) && from_problem[v] && (!min_fail || *from_problem[v] < *min_fail)) min_fail = from_problem[v];
  }
  if (min_fail) m.min_error_depth = static_cast<double>(*min_fail);

  // First failed step met in BFS order from the problem node.
  {
    std::vector<std::size_t> order;
    std::vector<bool> seen(n, false);
    std::deque<std::size_t> queue{p};
    seen[p] = true;
    while (!queue.empty()) {
      const auto u = queue.front();
      queue.pop_front();
      order.push_back(u);
      for (auto v : adj.out[u]) {
        if (!seen[v]) {
          seen[v] = true;
          queue.push_back(v);
        }
      }
    }
    for (auto v : order) {
      if (g.is_failed_step(v)) {
        m.first_failed_step_depth = static_cast<double>(*from_problem[v]);
        break;
      }
    }
  }

  if (!a) return m;

  // Forward reachability from the problem intersected with backward reachability to the answer.
  const auto to_answer = bfs(adj.in, *a);
  {
    std::size_t on_path = 0, reaches_answer = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (to_answer[v]) ++reaches_answer;
      if (from_problem[v] && to_answer[v]) ++on_path;
    }
    m.flow_coherence = ratio(on_path, n);
    m.endpoint_reachability = ratio(reaches_answer, n);
  }

  // Same quantity, computed node by node with forward searches only.
  {
    std::size_t involved = 0;
    for (std::size_t v = 0; v < n; ++v) {
      if (!from_problem[v]) continue;
      if (bfs(adj.out, v)[*a]) ++involved;
    }
    m.reasoning_efficiency = ratio(involved, n);
  }

  if (from_problem[*a]) {
    m.reasoning_depth = static_cast<double>(*from_problem[*a]);
    m.shortest_path_coverage = ratio(canonical_shortest_path(g).size(), n);
  }
  return m;
}

std::vector<std::string> GraphMetricVector::field_names() {
  return {"fsf",
          "recovery_efficiency",
          "branching_quality",
          "flow_coherence",
          "reasoning_depth",
          "orphaned_steps",
          "information_cascade",
          "cross_reference_density",
          "reasoning_efficiency",
          "shortest_path_coverage",
          "endpoint_reachability",
          "min_error_depth",
          "first_failed_step_depth",
          "total_steps",
          "mean_out_degree",
          "max_failed_children"};
}

std::vector<std::pair<std::string, std::optional<double>>> GraphMetricVector::fields() const {
  const std::optional<double> values[] = {fsf,
                                          recovery_efficiency,
                                          branching_quality,
                                          flow_coherence,
                                          reasoning_depth,
                                          orphaned_steps,
                                          information_cascade,
                                          cross_reference_density,
                                          reasoning_efficiency,
                                          shortest_path_coverage,
                                          endpoint_reachability,
                                          min_error_depth,
                                          first_failed_step_depth,
                                          total_steps,
                                          mean_out_degree,
                                          max_failed_children};
  const auto names = field_names();
  std::vector<std::pair<std::string, std::optional<double>>> out;
  for (std::size_t i = 0; i < names.size(); ++i) out.emplace_back(names[i], values[i]);
  return out;
}

}  // namespace cotscope
