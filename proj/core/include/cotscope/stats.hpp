#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cotscope {

struct Observation {
  std::string question_id;
  std::string trace_id;
  std::string model_id;
  std::optional<std::string> difficulty;
  bool correct = false;
  std::vector<std::optional<double>> values;  // aligned with ObservationSet::metric_names
};

struct ObservationSet {
  std::vector<std::string> metric_names;
  std::vector<Observation> rows;

  /// Throws ValidationError for an unknown metric.
  std::size_t metric_index(std::string_view name) const;
  ObservationSet for_model(std::string_view model_id) const;
  std::vector<std::string> models() const;  // sorted, unique
};

/// metrics.csv: trace_id,question_id,model,difficulty,correct,<metric...>;
/// an empty cell means undefined.
void write_metrics_csv(const ObservationSet& obs, const std::filesystem::path& path);
ObservationSet read_metrics_csv(const std::filesystem::path& path);

enum class Stars { Three, Two, One, NS };
std::string_view to_string(Stars s);
/// *** p <= 0.001, ** p <= 0.01, * p <= 0.05, else ns.
Stars stars_for(double p);

enum class CorrelationKind { Pearson, Spearman };

struct CorrelationResult {
  std::string model;
  std::string metric;
  std::string stratum;  // empty for the pooled analysis
  bool computable = false;
  double r = 0.0;
  double p = 1.0;
  std::size_t n_used = 0;
  std::size_t q_used = 0;
  Stars stars = Stars::NS;
  std::string note;  // why the result is not computable
};

/// Residualized correlation over pre-grouped data: rows in degenerate groups
/// (constant y) are dropped, x and y are centred within each group, and the
/// pooled residuals are correlated with df = n - q - 1. Spearman replaces x by
/// its pooled average ranks first.
CorrelationResult residual_correlation(const std::vector<std::size_t>& group, const std::vector<double>& x,
                                       const std::vector<double>& y, CorrelationKind kind = CorrelationKind::Pearson);

/// Question fixed-effect correlation of a metric against correctness, with
/// pairwise deletion of undefined metric values.
CorrelationResult conditional_correlation(const ObservationSet& obs, std::string_view metric,
                                          CorrelationKind kind = CorrelationKind::Pearson);

struct StratifiedResult {
  std::vector<CorrelationResult> results;                       // one per kept stratum
  std::vector<std::pair<std::string, std::size_t>> skipped;     // (stratum, usable rows)
};

/// conditional_correlation within each difficulty label; strata with fewer
/// than min_rows rows carrying the metric are skipped.
StratifiedResult stratified_correlation(const ObservationSet& obs, std::string_view metric,
                                        const std::vector<std::string>& strata, std::size_t min_rows = 100,
                                        CorrelationKind kind = CorrelationKind::Pearson);

struct GlmmOptions {
  int max_outer_iterations = 200;
  int max_inner_iterations = 60;
  double gradient_tolerance = 1e-5;
  double sigma_floor = 1e-4;
  std::optional<double> fixed_sigma;  // pin sigma_u instead of estimating it
  bool standardize = true;            // z-score the metric before fitting
};

struct GlmmFit {
  std::string model;
  std::string metric;
  double beta0 = 0.0;
  double beta1 = 0.0;
  double se1 = 0.0;
  double p_wald = 1.0;
  double sigma_u = 0.0;
  bool converged = false;
  bool sigma_at_floor = false;
  std::size_t n = 0;
  std::size_t q = 0;
  double log_likelihood = 0.0;
  int iterations = 0;
  std::string diagnostics;
};

/// Random-intercept logistic regression logit P(y=1) = b0 + b1 x + u_q,
/// u_q ~ N(0, sigma^2), fitted by maximizing the Laplace-approximated marginal
/// likelihood. Throws ValidationError unless at least two groups have both
/// outcomes.
GlmmFit fit_glmm(const std::vector<std::size_t>& group, const std::vector<double>& x, const std::vector<int>& y,
                 const GlmmOptions& options = {});
GlmmFit fit_glmm(const ObservationSet& obs, std::string_view metric, const GlmmOptions& options = {});

struct ConcordanceRow {
  std::string model;
  std::string metric;
  bool correlation_significant = false;
  bool glmm_significant = false;
  bool same_sign = false;
  bool concordant = false;  // meaningful only when correlation_significant
};

struct ConcordanceReport {
  std::vector<ConcordanceRow> rows;
  std::size_t implicating = 0;  // significant correlations
  std::size_t concordant = 0;   // of those, matched by a same-signed significant GLMM
  std::optional<double> rate() const;
};

/// Pairs results by (model, metric). A significant correlation is concordant
/// when the converged GLMM coefficient has the same sign and p_wald <= 0.05.
ConcordanceReport concordance_report(const std::vector<CorrelationResult>& correlations,
                                     const std::vector<GlmmFit>& fits);

/// correlations.csv: model,metric,stratum,r,p,stars,n_used,q_used,computable,note
void write_correlations_csv(const std::vector<CorrelationResult>& results, const std::filesystem::path& path);
std::vector<CorrelationResult> read_correlations_csv(const std::filesystem::path& path);
/// glmm.csv: model,metric,beta0,beta1,se1,p_wald,sigma_u,converged,sigma_at_floor,n,q,iterations,diagnostics
void write_glmm_csv(const std::vector<GlmmFit>& fits, const std::filesystem::path& path);
std::vector<GlmmFit> read_glmm_csv(const std::filesystem::path& path);
void write_concordance_csv(const ConcordanceReport& report, const std::filesystem::path& path);

}  // namespace cotscope
