#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cotscope/annotator.hpp"
#include "cotscope/extractor.hpp"
#include "cotscope/interventions.hpp"
#include "cotscope/llm_client.hpp"
#include "cotscope/stats.hpp"

namespace cotscope {

/// "cotscope <major.minor.patch>".
std::string version_string();

struct RunConfig {
  std::filesystem::path questions;
  std::filesystem::path traces;
  std::filesystem::path out_dir;
  std::filesystem::path cache_dir;
  std::optional<std::filesystem::path> keywords;

  bool offline = false;
  std::string endpoint = "http://localhost:8000/v1/chat/completions";
  std::string api_key_env = "COTSCOPE_API_KEY";
  std::size_t max_concurrency = 4;
  RetryPolicy retry;
  std::uint64_t seed = 0;

  JudgeConfig judge;
  ExtractorConfig extractor;
  ContinuationConfig continuation;
  std::string summary_model = "judge";

  DirectionMap directions = DirectionMap::standard();
  std::size_t min_rows = 100;
  std::size_t bootstrap_replicates = 200;
  std::size_t pool_size = 64;
  std::size_t continuations = 8;
  bool spearman = false;
  double sigma_floor = 1e-4;

  std::vector<double> entropy_fractions = {0.0, 0.25, 0.5, 0.75};
  std::size_t entropy_samples = 8;
  std::optional<std::size_t> entropy_max_traces;

  bool edit_only_incorrect = true;

  /// Throws ValidationError naming the offending field path ("config.x.y").
  void validate() const;
};

/// Parses a config document. Relative paths resolve against `base_dir`;
/// unknown keys and type mismatches raise ValidationError with the field path.
RunConfig parse_run_config(std::string_view json_text, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

/// Serialized config with the tool version. The output directory itself is
/// omitted so identical runs into different directories match byte for byte.
std::string run_config_json(const RunConfig& config);

/// Metric columns of metrics.csv in order: lexical metrics, then graph metrics.
std::vector<std::string> metric_columns();

/// Renders a model x metric grid as SVG: cells shaded by the signed effect,
/// non-significant or undefined cells gray, significance stars overlaid.
struct HeatmapCell {
  std::string model;
  std::string metric;
  std::optional<double> effect;
  double p = 1.0;
  Stars stars = Stars::NS;
};
std::string render_heatmap_svg(const std::string& title, const std::vector<std::string>& models,
                               const std::vector<std::string>& metrics, const std::vector<HeatmapCell>& cells,
                               double effect_scale);

class Pipeline {
 public:
  /// Without a transport, live mode talks to config.endpoint over HTTP.
  explicit Pipeline(RunConfig config, std::shared_ptr<ChatTransport> transport = nullptr);
  ~Pipeline();

  static const std::vector<std::string>& stages();

  /// Runs one stage ("pipeline" runs all of them in order).
  void run(std::string_view stage);

  void ingest();
  void chunk();
  void annotate();
  void extract_graph();
  void metrics();
  void correlate();
  void glmm();
  void select();
  void edit();
  void entropy();
  void report();
  void all();

  const RunConfig& config() const { return config_; }
  std::filesystem::path artifact(std::string_view name) const { return config_.out_dir / std::string(name); }

 private:
  LlmClient& client();
  void require(std::string_view stage, const std::vector<std::string>& artifacts) const;
  void write_config() const;

  RunConfig config_;
  std::shared_ptr<ChatTransport> transport_;
  std::unique_ptr<LlmClient> client_;
};

}  // namespace cotscope
