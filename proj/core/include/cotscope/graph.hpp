#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cotscope/errors.hpp"

namespace cotscope {

enum class NodeStatus { Success, Failed };

struct GraphNode {
  std::string id;
  std::string label;
  NodeStatus status = NodeStatus::Success;
  std::string fillcolor;  // as written, empty if absent
};

/// Reasoning graph as extracted from a CoT. Steps are all nodes other than the
/// problem and answer anchors.
struct ReasoningGraph {
  std::vector<GraphNode> nodes;
  std::vector<std::pair<std::string, std::string>> edges;
  std::string problem_node;
  std::optional<std::string> answer_node;
  std::vector<std::string> warnings;

  std::optional<std::size_t> index_of(std::string_view id) const;
  const GraphNode* find(std::string_view id) const;
  bool is_anchor(std::string_view id) const;
  /// Failed status on a non-anchor node.
  bool is_failed_step(std::size_t index) const;
  std::size_t step_count() const;
  std::size_t failed_step_count() const;

  /// Throws ValidationError on duplicate ids, dangling edges or a missing problem node.
  void validate() const;
};

class DotSyntaxError : public ValidationError {
 public:
  DotSyntaxError(std::size_t offset, std::size_t line, std::size_t column, const std::string& what);
  std::size_t offset() const noexcept { return offset_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t offset_, line_, column_;
};

/// The first `[strict] digraph [ID] { ... }` block in free text (prose and
/// markdown fences around it are ignored), or nullopt.
std::optional<std::string_view> find_digraph_block(std::string_view text);

/// Parses the DOT subset emitted by the extraction prompt: graph attributes,
/// node/edge default attribute lists, node statements with attributes, edge
/// chains with "->", quoted and HTML identifiers, and comments. fillcolor
/// lightblue means success and lightpink means failed; any other color on a
/// step node is treated as success with a warning. The problem and answer
/// anchors are the first nodes whose label contains "problem statement" /
/// "final answer" (case-insensitive).
ReasoningGraph parse_dot(std::string_view text);

/// Failed steps / all steps, anchors excluded. Undefined without steps.
std::optional<double> fsf(const ReasoningGraph& g);

struct GraphMetricVector {
  std::optional<double> fsf;
  std::optional<double> recovery_efficiency;
  std::optional<double> branching_quality;
  std::optional<double> flow_coherence;
  std::optional<double> reasoning_depth;
  std::optional<double> orphaned_steps;
  std::optional<double> information_cascade;
  std::optional<double> cross_reference_density;
  std::optional<double> reasoning_efficiency;
  std::optional<double> shortest_path_coverage;
  std::optional<double> endpoint_reachability;
  std::optional<double> min_error_depth;
  std::optional<double> first_failed_step_depth;
  std::optional<double> total_steps;
  std::optional<double> mean_out_degree;
  std::optional<double> max_failed_children;

  /// (name, value) in declaration order; names match the metrics.csv columns.
  std::vector<std::pair<std::string, std::optional<double>>> fields() const;
  static std::vector<std::string> field_names();
};

/// All graph metrics. Distances are directed BFS edge counts; metrics needing
/// the answer node are undefined when it is absent. Cycles are allowed.
GraphMetricVector compute_graph_metrics(const ReasoningGraph& g);

/// Node ids along the BFS shortest problem->answer path (neighbours expanded in
/// id order, first discovery wins). Empty if the answer is absent or unreachable.
std::vector<std::string> canonical_shortest_path(const ReasoningGraph& g);

/// Directed BFS distances from `source` (by node index); nullopt = unreachable.
std::vector<std::optional<std::size_t>> bfs_distances(const ReasoningGraph& g, std::size_t source);

struct GraphRecord {
  std::string trace_id;
  std::string dot;
  std::vector<std::string> parse_warnings;
};

/// graphs.jsonl: {"trace_id","dot","parse_warnings":[...]}
void write_graphs_jsonl(const std::vector<GraphRecord>& records, const std::filesystem::path& path);
std::vector<GraphRecord> read_graphs_jsonl(const std::filesystem::path& path);

}  // namespace cotscope
