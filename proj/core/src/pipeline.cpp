#include "cotscope/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>

#include "cotscope/chunker.hpp"
#include "cotscope/corpus.hpp"
#include "cotscope/grading.hpp"
#include "cotscope/graph.hpp"
#include "cotscope/utf8.hpp"
#include "io.hpp"

namespace cotscope {

using io::json;

std::vector<std::string> metric_columns() {
  std::vector<std::string> cols = {"length",          "review_ratio",      "review_centroid",
                                   "review_chunk_fraction", "switch_count_norm", "motivation_score"};
  for (auto& n : GraphMetricVector::field_names()) cols.push_back(std::move(n));
  return cols;
}

namespace {

struct Artifact {
  std::string name;
  std::string producer;
  std::vector<std::string> deps;
};

const std::vector<Artifact>& artifacts() {
  static const std::vector<Artifact> table = {
      {"questions.jsonl", "ingest", {}},
      {"traces.jsonl", "ingest", {}},
      {"chunks.jsonl", "chunk", {"traces.jsonl"}},
      {"annotations.jsonl", "annotate", {"traces.jsonl", "chunks.jsonl"}},
      {"extractions.jsonl", "extract-graph", {"traces.jsonl"}},
      {"metrics.csv", "metrics", {"traces.jsonl", "chunks.jsonl", "annotations.jsonl", "extractions.jsonl"}},
      {"correlations.csv", "correlate", {"metrics.csv"}},
      {"glmm.csv", "glmm", {"metrics.csv"}},
  };
  return table;
}

const Artifact& artifact_info(std::string_view name) {
  for (const auto& a : artifacts())
    if (a.name == name) return a;
  throw std::logic_error("unknown artifact " + std::string(name));
}

void write_json(const std::filesystem::path& path, const json& j) { io::write_file_atomic(path, j.dump(2) + "\n"); }

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

Corpus load_corpus(const Pipeline& p) {
  Corpus c;
  ingest_jsonl(c, p.artifact("questions.jsonl"), RecordKind::Questions);
  ingest_jsonl(c, p.artifact("traces.jsonl"), RecordKind::Traces);
  return c;
}

// Known difficulty labels first in their dataset order, then the rest sorted.
std::vector<std::string> ordered_strata(const ObservationSet& obs) {
  std::set<std::string> present;
  for (const auto& r : obs.rows)
    if (r.difficulty) present.insert(*r.difficulty);
  std::vector<std::string> out;
  for (auto d : {Dataset::HARP, Dataset::GPQADiamond, Dataset::AIME25}) {
    for (const auto& label : difficulty_labels(d).value_or(std::vector<std::string>{})) {
      if (present.erase(label)) out.push_back(label);
    }
  }
  out.insert(out.end(), present.begin(), present.end());
  return out;
}

std::string file_safe(std::string_view s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_';
  return out;
}

}  // namespace

const std::vector<std::string>& Pipeline::stages() {
  static const std::vector<std::string> names = {"ingest",  "chunk",  "annotate", "extract-graph",
                                                 "metrics", "correlate", "glmm",  "select",
                                                 "edit",    "entropy", "report"};
  return names;
}

Pipeline::Pipeline(RunConfig config, std::shared_ptr<ChatTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  if (config_.out_dir.empty()) throw ValidationError("config.out_dir: required");
  config_.validate();
}

Pipeline::~Pipeline() = default;

LlmClient& Pipeline::client() {
  if (!client_) {
    ClientConfig cc;
    cc.cache_dir = config_.cache_dir;
    cc.offline = config_.offline;
    cc.max_concurrency = config_.max_concurrency;
    cc.retry = config_.retry;
    auto transport = transport_;
    if (!config_.offline && !transport) {
      const char* key = std::getenv(config_.api_key_env.c_str());
      transport = std::make_shared<HttpChatTransport>(config_.endpoint, key ? key : "");
    }
    client_ = std::make_unique<LlmClient>(cc, config_.offline ? nullptr : transport);
  }
  return *client_;
}

void Pipeline::require(std::string_view stage, const std::vector<std::string>& needed) const {
  std::function<std::string(const std::string&)> earliest = [&](const std::string& name) -> std::string {
    for (const auto& dep : artifact_info(name).deps)
      if (!std::filesystem::exists(artifact(dep))) return earliest(dep);
    return name;
  };
  for (const auto& name : needed) {
    if (std::filesystem::exists(artifact(name))) continue;
    const auto root = earliest(name);
    std::string msg = std::string(stage) + ": missing upstream artifact " + artifact(name).string();
    if (root != name) msg += "; earliest missing artifact is " + artifact(root).string();
    msg += " (run `cotscope " + artifact_info(root).producer + "`)";
    throw UpstreamMissingError(msg);
  }
}

void Pipeline::write_config() const {
  std::filesystem::create_directories(config_.out_dir);
  io::write_file_atomic(artifact("run_config.json"), run_config_json(config_));
}

void Pipeline::run(std::string_view stage) {
  static const std::map<std::string, void (Pipeline::*)(), std::less<>> dispatch = {
      {"ingest", &Pipeline::ingest},       {"chunk", &Pipeline::chunk},
      {"annotate", &Pipeline::annotate},   {"extract-graph", &Pipeline::extract_graph},
      {"metrics", &Pipeline::metrics},     {"correlate", &Pipeline::correlate},
      {"glmm", &Pipeline::glmm},           {"select", &Pipeline::select},
      {"edit", &Pipeline::edit},           {"entropy", &Pipeline::entropy},
      {"report", &Pipeline::report},       {"pipeline", &Pipeline::all},
  };
  auto it = dispatch.find(stage);
  if (it == dispatch.end()) throw ValidationError("unknown subcommand: " + std::string(stage));
  (this->*(it->second))();
}

void Pipeline::all() {
  for (const auto& s : stages()) run(s);
}

// -------------------------------------------------------------------- stages

void Pipeline::ingest() {
  for (const auto& p : {config_.questions, config_.traces})
    if (!std::filesystem::exists(p)) throw UpstreamMissingError("ingest: input file " + p.string() + " does not exist");
  write_config();
  Corpus c;
  const auto q = ingest_jsonl(c, config_.questions, RecordKind::Questions);
  const auto t = ingest_jsonl(c, config_.traces, RecordKind::Traces);
  grade_corpus(c);
  write_questions_jsonl(c, artifact("questions.jsonl"));
  write_traces_jsonl(c, artifact("traces.jsonl"));
  json counts = json::array();
  for (const auto& [key, n] : c.trace_counts())
    counts.push_back({{"question_id", key.first}, {"model", key.second}, {"traces", n}});
  json prov = json::object();
  for (const auto& [k, v] : c.provenance) prov[k] = v;
  write_json(artifact("ingest_report.json"),
             {{"questions", q.records}, {"traces", t.records}, {"provenance", prov}, {"trace_counts", counts}});
}

void Pipeline::chunk() {
  require("chunk", {"traces.jsonl", "questions.jsonl"});
  write_config();
  const auto corpus = load_corpus(*this);
  const auto table = config_.keywords ? KeywordTable::from_file(*config_.keywords) : KeywordTable::defaults();
  ChunksByTrace chunks;
  for (const auto& t : corpus.traces()) chunks[t.id] = segment(t.cot, table);
  write_chunks_jsonl(chunks, artifact("chunks.jsonl"));
}

void Pipeline::annotate() {
  require("annotate", {"traces.jsonl", "questions.jsonl", "chunks.jsonl"});
  write_config();
  const auto corpus = load_corpus(*this);
  const auto chunks = read_chunks_jsonl(artifact("chunks.jsonl"));
  Annotator annotator(client(), config_.judge);
  AnnotationsByTrace out;
  std::size_t calls = 0, defaulted = 0, errors = 0;
  for (const auto& t : corpus.traces()) {
    auto it = chunks.find(t.id);
    if (it == chunks.end()) throw ValidationError("annotate: no chunks for trace " + t.id);
    auto activity = annotator.label_activity(it->second);
    auto motivation = annotator.label_motivation(it->second, activity.annotations);
    for (const auto* run : {&activity, &motivation}) {
      calls += run->calls;
      defaulted += run->defaulted;
      errors += run->errors.size();
      if (config_.offline && !run->errors.empty()) throw ProviderError("annotate: " + run->errors.front());
    }
    out[t.id] = std::move(motivation.annotations);
  }
  write_annotations_jsonl(out, artifact("annotations.jsonl"));
  write_json(artifact("annotate_report.json"),
             {{"traces", out.size()}, {"judge_calls", calls}, {"defaulted", defaulted}, {"transport_errors", errors}});
}

void Pipeline::extract_graph() {
  require("extract-graph", {"traces.jsonl", "questions.jsonl"});
  write_config();
  const auto corpus = load_corpus(*this);
  Extractor extractor(client(), config_.extractor);
  std::vector<std::string_view> cots;
  for (const auto& t : corpus.traces()) cots.push_back(t.cot);
  const auto outcomes = extractor.extract_batch(cots);

  std::vector<ExtractionRecord> records;
  std::vector<GraphRecord> graphs;
  std::size_t failed = 0, retried = 0, unaligned = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& t = corpus.traces()[i];
    const auto& o = outcomes[i];
    if (o.attempts > 1) ++retried;
    ExtractionRecord r;
    r.trace_id = t.id;
    if (o.failed()) {
      if (o.provider_failure && config_.offline) throw ProviderError("extract-graph: " + o.error);
      ++failed;
      r.status = "failed";
      r.error = o.error;
      records.push_back(std::move(r));
      continue;
    }
    const auto& res = *o.result;
    r.status = "ok";
    r.dot = res.dot;
    r.node_quotes = res.node_quotes;
    r.branches = res.branches;
    r.raw_reply = res.raw_reply;
    auto aligned = align_quotes(t.cot, res.node_quotes);
    r.spans = std::move(aligned.spans);
    r.unaligned = std::move(aligned.unaligned);
    unaligned += r.unaligned.size();
    graphs.push_back({t.id, res.dot, res.graph.warnings});
    records.push_back(std::move(r));
  }
  write_extractions_jsonl(records, artifact("extractions.jsonl"));
  write_graphs_jsonl(graphs, artifact("graphs.jsonl"));
  const double rate = records.empty() ? 0.0 : static_cast<double>(failed) / static_cast<double>(records.size());
  write_json(artifact("extract_report.json"), {{"traces", records.size()},
                                               {"extraction_failed", failed},
                                               {"extraction_failed_rate", rate},
                                               {"retried", retried},
                                               {"unaligned_nodes", unaligned}});
}

void Pipeline::metrics() {
  require("metrics", {"traces.jsonl", "questions.jsonl", "chunks.jsonl", "annotations.jsonl", "extractions.jsonl"});
  write_config();
  const auto corpus = load_corpus(*this);
  const auto chunks = read_chunks_jsonl(artifact("chunks.jsonl"));
  const auto annotations = read_annotations_jsonl(artifact("annotations.jsonl"));
  std::map<std::string, ExtractionRecord> extractions;
  for (auto& r : read_extractions_jsonl(artifact("extractions.jsonl"))) extractions[r.trace_id] = std::move(r);

  ObservationSet obs;
  obs.metric_names = metric_columns();
  for (const auto& t : corpus.traces()) {
    const auto& q = corpus.question(t.question_id);
    Observation row;
    row.trace_id = t.id;
    row.question_id = t.question_id;
    row.model_id = t.model_id;
    row.difficulty = q.difficulty;
    row.correct = t.correct.value_or(false);
    row.values.assign(obs.metric_names.size(), std::nullopt);
    row.values[0] = static_cast<double>(char_length(t));
    auto ch = chunks.find(t.id);
    auto an = annotations.find(t.id);
    if (ch != chunks.end() && an != annotations.end() && an->second.size() == ch->second.size()) {
      const auto lex = lexical_metrics(t, ch->second, an->second);
      row.values[1] = lex.review_ratio;
      row.values[2] = lex.review_centroid;
      row.values[3] = lex.review_chunk_fraction;
      row.values[4] = lex.switch_count_norm;
      row.values[5] = lex.motivation_score;
    }
    if (auto ex = extractions.find(t.id); ex != extractions.end() && ex->second.status == "ok") {
      const auto g = compute_graph_metrics(parse_dot(ex->second.dot));
      std::size_t col = 6;
      for (const auto& [name, value] : g.fields()) row.values[col++] = value;
    }
    obs.rows.push_back(std::move(row));
  }
  write_metrics_csv(obs, artifact("metrics.csv"));

  std::string summary = "model,metric,mean,n_defined,n_traces,accuracy\n";
  for (const auto& model : obs.models()) {
    const auto sub = obs.for_model(model);
    double correct = 0.0;
    for (const auto& r : sub.rows) correct += r.correct ? 1.0 : 0.0;
    const double acc = correct / static_cast<double>(sub.rows.size());
    for (std::size_t m = 0; m < obs.metric_names.size(); ++m) {
      std::vector<double> vals;
      for (const auto& r : sub.rows)
        if (r.values[m]) vals.push_back(*r.values[m]);
      summary += io::csv_escape(model) + ',' + obs.metric_names[m] + ',' +
                 (vals.empty() ? std::string() : io::format_double(mean_of(vals))) + ',' +
                 std::to_string(vals.size()) + ',' + std::to_string(sub.rows.size()) + ',' + io::format_double(acc) +
                 '\n';
    }
  }
  io::write_file_atomic(artifact("metrics_summary.csv"), summary);
}

void Pipeline::correlate() {
  require("correlate", {"metrics.csv"});
  write_config();
  const auto obs = read_metrics_csv(artifact("metrics.csv"));
  const auto kind = config_.spearman ? CorrelationKind::Spearman : CorrelationKind::Pearson;
  std::vector<CorrelationResult> results;
  json skipped = json::array();
  json cells = json::array();
  for (const auto& model : obs.models()) {
    const auto sub = obs.for_model(model);
    const auto strata = ordered_strata(sub);
    for (const auto& metric : obs.metric_names) {
      auto pooled = conditional_correlation(sub, metric, kind);
      pooled.model = model;
      cells.push_back({{"model", model},
                       {"metric", metric},
                       {"r", pooled.computable ? json(pooled.r) : json(nullptr)},
                       {"p", pooled.computable ? json(pooled.p) : json(nullptr)},
                       {"stars", pooled.computable ? std::string(to_string(pooled.stars)) : std::string("na")},
                       {"n_used", pooled.n_used},
                       {"q_used", pooled.q_used}});
      results.push_back(std::move(pooled));
      if (strata.empty()) continue;
      auto strat = stratified_correlation(sub, metric, strata, config_.min_rows, kind);
      for (auto& r : strat.results) {
        r.model = model;
        results.push_back(std::move(r));
      }
      for (const auto& [label, rows] : strat.skipped)
        skipped.push_back({{"model", model}, {"metric", metric}, {"stratum", label}, {"rows", rows}});
    }
  }
  write_correlations_csv(results, artifact("correlations.csv"));
  write_json(artifact("heatmap.json"), {{"kind", config_.spearman ? "spearman" : "pearson"},
                                        {"models", obs.models()},
                                        {"metrics", obs.metric_names},
                                        {"cells", cells}});
  write_json(artifact("correlate_report.json"), {{"min_rows", config_.min_rows}, {"skipped_strata", skipped}});
}

void Pipeline::glmm() {
  require("glmm", {"metrics.csv"});
  write_config();
  const auto obs = read_metrics_csv(artifact("metrics.csv"));
  GlmmOptions options;
  options.sigma_floor = config_.sigma_floor;
  std::vector<GlmmFit> fits;
  for (const auto& model : obs.models()) {
    const auto sub = obs.for_model(model);
    for (const auto& metric : obs.metric_names) {
      try {
        auto f = fit_glmm(sub, metric, options);
        f.model = model;
        fits.push_back(std::move(f));
      } catch (const ValidationError& e) {
        GlmmFit f;
        f.model = model;
        f.metric = metric;
        f.diagnostics = e.what();
        fits.push_back(std::move(f));
      }
    }
  }
  write_glmm_csv(fits, artifact("glmm.csv"));
}

void Pipeline::select() {
  require("select", {"metrics.csv"});
  write_config();
  const auto obs = read_metrics_csv(artifact("metrics.csv"));
  const auto i_fsf = obs.metric_index("fsf"), i_len = obs.metric_index("length"),
             i_rr = obs.metric_index("review_ratio");
  SelectionReport report;
  report.nominal_pool_size = config_.pool_size;
  for (const auto& model : obs.models()) {
    std::map<std::string, Problem> problems;
    for (const auto& r : obs.rows) {
      if (r.model_id != model) continue;
      auto& p = problems[r.question_id];
      p.question_id = r.question_id;
      p.candidates.push_back({r.trace_id, r.correct, r.values[i_fsf], r.values[i_len], r.values[i_rr]});
    }
    std::vector<Problem> list;
    for (auto& [id, p] : problems) list.push_back(std::move(p));
    for (auto s : {Selector::FSF, Selector::Length, Selector::ReviewRatio, Selector::Random}) {
      auto e = bootstrap_pass1(list, s, config_.directions.resolve(s, model),
                               {config_.bootstrap_replicates, config_.seed});
      e.model_id = model;
      report.entries.push_back(e);
    }
  }
  write_selection_csv(report, artifact("selection.csv"));
}

void Pipeline::edit() {
  require("edit", {"traces.jsonl", "questions.jsonl", "extractions.jsonl"});
  write_config();
  const auto corpus = load_corpus(*this);
  std::map<std::string, ExtractionRecord> extractions;
  for (auto& r : read_extractions_jsonl(artifact("extractions.jsonl"))) extractions[r.trace_id] = std::move(r);

  json excluded = json::array();
  std::vector<EditRecord> records;
  std::size_t eligible_traces = 0;
  for (const auto& t : corpus.traces()) {
    if (config_.edit_only_incorrect && t.correct.value_or(false)) continue;
    auto ex = extractions.find(t.id);
    if (ex == extractions.end() || ex->second.status != "ok") {
      excluded.push_back({{"trace_id", t.id}, {"reason", "extraction failed"}});
      continue;
    }
    const auto graph = parse_dot(ex->second.dot);
    const auto screening = eligible_branches(graph, ex->second.branches, ex->second.spans);
    if (screening.eligible.empty()) {
      excluded.push_back({{"trace_id", t.id}, {"reason", "no aligned failed branch"}, {"details", screening.rejected}});
      continue;
    }
    ++eligible_traces;
    const auto& question = corpus.question(t.question_id);
    const auto& tmpl = config_.continuation.template_for(t.model_id);
    for (auto choice : {BranchChoice::First, BranchChoice::Last}) {
      const auto& branch = choice == BranchChoice::First ? screening.eligible.front() : screening.eligible.back();
      const std::string branch_text(utf8::slice(t.cot, branch.cut_start, branch.cut_end));
      std::optional<std::string> summary;
      try {
        summary = client().send(summary_request(branch_text, config_.summary_model));
      } catch (const ProviderError& e) {
        if (config_.offline) throw;
        excluded.push_back({{"trace_id", t.id},
                            {"branch_choice", to_string(choice)},
                            {"reason", std::string("summary failed: ") + e.what()}});
      }
      for (auto variant : {EditVariant::Original, EditVariant::Reduced, EditVariant::ReducedWithSummary}) {
        if (variant == EditVariant::ReducedWithSummary && !summary) continue;
        EditRecord rec;
        rec.plan = plan_edit(t.id, t.cot, screening.eligible, choice, variant, summary);
        rec.outcome = continuation_accuracy(client(), question, rec.plan.partial_cot, tmpl, config_.continuation,
                                            config_.continuations);
        if (rec.outcome.replay_miss) throw ProviderError("edit: " + rec.outcome.errors.front());
        records.push_back(std::move(rec));
      }
    }
  }
  write_edits_jsonl(records, artifact("edits.jsonl"));

  std::string summary = "branch_choice,variant,plans,mean_accuracy,sd_accuracy,ungraded\n";
  for (auto choice : {BranchChoice::First, BranchChoice::Last}) {
    for (auto variant : {EditVariant::Original, EditVariant::Reduced, EditVariant::ReducedWithSummary}) {
      std::vector<double> acc;
      std::size_t ungraded = 0;
      for (const auto& r : records) {
        if (r.plan.branch_choice != choice || r.plan.variant != variant) continue;
        ungraded += r.outcome.ungraded();
        if (auto a = r.outcome.accuracy()) acc.push_back(*a);
      }
      summary += std::string(to_string(choice)) + ',' + std::string(to_string(variant)) + ',' +
                 std::to_string(acc.size()) + ',' + (acc.empty() ? "" : io::format_double(mean_of(acc))) + ',' +
                 (acc.empty() ? "" : io::format_double(sd_of(acc))) + ',' + std::to_string(ungraded) + '\n';
    }
  }
  io::write_file_atomic(artifact("edit_summary.csv"), summary);
  write_json(artifact("edit_report.json"), {{"eligible_traces", eligible_traces}, {"excluded", excluded}});
}

void Pipeline::entropy() {
  require("entropy", {"traces.jsonl", "questions.jsonl"});
  write_config();
  const auto corpus = load_corpus(*this);
  std::vector<std::pair<std::string, EntropyProfile>> profiles;
  std::size_t n = 0;
  for (const auto& t : corpus.traces()) {
    if (config_.entropy_max_traces && n >= *config_.entropy_max_traces) break;
    ++n;
    profiles.emplace_back(t.model_id, truncation_entropy(client(), corpus.question(t.question_id), t,
                                                         config_.continuation, config_.entropy_fractions,
                                                         config_.entropy_samples));
  }
  write_entropy_csv(profiles, artifact("entropy.csv"));

  std::map<std::string, std::vector<std::vector<double>>> by_model;
  std::map<std::string, std::vector<double>> prog;
  for (const auto& [model, p] : profiles) {
    auto& cols = by_model[model];
    cols.resize(p.fractions.size());
    for (std::size_t c = 0; c < p.fractions.size(); ++c)
      if (p.entropies[c]) cols[c].push_back(*p.entropies[c]);
    if (p.progressiveness) prog[model].push_back(*p.progressiveness);
  }
  std::string out = "model,fraction,mean_entropy,traces,mean_progressiveness\n";
  for (const auto& [model, cols] : by_model) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      out += io::csv_escape(model) + ',' + io::format_double(config_.entropy_fractions[c]) + ',' +
             (cols[c].empty() ? "" : io::format_double(mean_of(cols[c]))) + ',' + std::to_string(cols[c].size()) +
             ',' + (prog[model].empty() ? "" : io::format_double(mean_of(prog[model]))) + '\n';
    }
  }
  io::write_file_atomic(artifact("entropy_summary.csv"), out);
}

void Pipeline::report() {
  require("report", {"correlations.csv"});
  write_config();
  const auto correlations = read_correlations_csv(artifact("correlations.csv"));
  const auto dir = artifact("report");
  std::filesystem::create_directories(dir);

  std::vector<std::string> models, metrics, strata;
  auto add = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& c : correlations) {
    add(models, c.model);
    add(metrics, c.metric);
    if (!c.stratum.empty()) add(strata, c.stratum);
  }
  auto grid = [&](const std::string& stratum) {
    std::vector<HeatmapCell> cells;
    for (const auto& c : correlations) {
      if (c.stratum != stratum) continue;
      cells.push_back({c.model, c.metric, c.computable ? std::optional<double>(c.r) : std::nullopt, c.p, c.stars});
    }
    return cells;
  };
  io::write_file_atomic(dir / "correlations.svg",
                        render_heatmap_svg("Conditional correlation with correctness (r)", models, metrics, grid(""),
                                           0.3));
  for (const auto& s : strata) {
    io::write_file_atomic(dir / ("correlations_" + file_safe(s) + ".svg"),
                          render_heatmap_svg("Conditional correlation with correctness (r), " + s, models, metrics,
                                             grid(s), 0.3));
  }
  json summary = {{"models", models}, {"metrics", metrics}, {"strata", strata}};
  if (std::filesystem::exists(artifact("glmm.csv"))) {
    const auto fits = read_glmm_csv(artifact("glmm.csv"));
    std::vector<HeatmapCell> cells;
    for (const auto& f : fits) {
      cells.push_back({f.model, f.metric, f.converged ? std::optional<double>(f.beta1) : std::nullopt, f.p_wald,
                       f.converged ? stars_for(f.p_wald) : Stars::NS});
    }
    io::write_file_atomic(dir / "glmm.svg",
                          render_heatmap_svg("Random-intercept logistic coefficient (per SD)", models, metrics, cells,
                                             1.0));
    const auto conc = concordance_report(correlations, fits);
    write_concordance_csv(conc, dir / "concordance.csv");
    summary["concordance"] = {{"implicating", conc.implicating},
                              {"concordant", conc.concordant},
                              {"rate", opt(conc.rate())}};
  }
  write_json(dir / "report.json", summary);
}

}  // namespace cotscope
