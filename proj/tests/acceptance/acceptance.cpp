// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//
//   cotscope_acceptance <path-to-cotscope-cli> <pipeline-fixture-config>

#include <json.hpp>
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "../edit_fixture.hpp"
#include "../graph_fixtures.hpp"
#include "../oracles/ks.hpp"
#include "../support.hpp"
#include "cotscope/annotator.hpp"
#include "cotscope/graph.hpp"
#include "cotscope/interventions.hpp"
#include "cotscope/pipeline.hpp"
#include "cotscope/stats.hpp"
#include "cotscope/synthetic.hpp"

using namespace cotscope;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome ac1() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(500);
  for (int i = 0; i < 500; ++i) {
    const auto g = testing::random_dag(rng, 12);
    const auto diff = testing::first_mismatch(compute_graph_metrics(testing::to_reasoning_graph(g)), oracle::metrics(g));
    o.require(diff.empty(), "DAG " + std::to_string(i) + " differs in " + diff);
  }
  const double s = seconds_since(t0);
  o.require(s < 10.0, fmt("took %.2f s", s));
  if (o.pass) o.detail = fmt("500 DAGs, 16 fields each, %.2f s", s);
  return o;
}

Outcome ac2() {
  Outcome o;
  const auto fig = parse_dot(testing::read_text(COTSCOPE_FIXTURE_DIR "/graph/figure1.dot"));
  o.require(fig.step_count() == 16, "figure fixture does not have 16 step nodes");
  o.require(fsf(fig) == 5.0 / 16.0, "figure fixture fsf != 5/16");

  const auto edit = parse_extraction_reply(testing::edit::fixture("extraction_reply.txt")).graph;
  o.require(fsf(edit) == 2.0 / 8.0, "edit fixture fsf != 2/8");

  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    auto g = testing::random_dag(rng, 30);
    std::size_t steps = 0, failed = 0;
    for (std::size_t v = 0; v < g.n; ++v) {
      if (v == g.problem || (g.answer && v == *g.answer)) continue;
      ++steps;
      failed += g.failed[v] ? 1 : 0;
    }
    const auto got = fsf(testing::to_reasoning_graph(g));
    o.require(steps == 0 ? !got.has_value() : got == double(failed) / double(steps), "random fixture count mismatch");
    for (auto&& f : g.failed) f = false;
    const auto clean = fsf(testing::to_reasoning_graph(g));
    o.require(!clean || *clean == 0.0, "all-success graph has nonzero fsf");
  }
  if (o.pass) o.detail = "figure fixture 5/16, edit fixture 2/8, 200 random graphs";
  return o;
}

Outcome ac3() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  synthetic::PlantedOptions opt;
  opt.seed = 2025;
  auto obs = synthetic::planted_corpus(opt);
  o.require(obs.rows.size() == 4800, "planted corpus is not 300 x 16");
  const auto r = conditional_correlation(obs, "fsf");
  o.require(r.computable && r.r < 0 && r.p < 0.001, fmt("planted r=%.4f p=%.3g", r.r, r.p));

  std::map<std::string, std::vector<std::size_t>> by_q;
  for (std::size_t i = 0; i < obs.rows.size(); ++i) by_q[obs.rows[i].question_id].push_back(i);
  std::mt19937_64 rng(99);
  std::vector<double> ps;
  auto shuffled = obs;
  for (int perm = 0; perm < 1000; ++perm) {
    for (const auto& [q, idx] : by_q) {
      std::vector<bool> ys;
      for (auto i : idx) ys.push_back(obs.rows[i].correct);
      for (std::size_t k = ys.size(); k > 1; --k) {
        const auto j = uniform_below(rng, k);
        const bool tmp = ys[k - 1];
        ys[k - 1] = ys[j];
        ys[j] = tmp;
      }
      for (std::size_t k = 0; k < idx.size(); ++k) shuffled.rows[idx[k]].correct = ys[k];
    }
    ps.push_back(conditional_correlation(shuffled, "fsf").p);
  }
  const double ks_p = oracle::ks_pvalue_uniform(ps);
  o.require(ks_p > 0.01, fmt("permutation p-values not uniform: KS p=%.4f", ks_p));
  const double s = seconds_since(t0);
  o.require(s < 30.0, fmt("took %.2f s", s));
  if (o.pass) o.detail = fmt("r=%.4f p=%.2g; KS p=%.3f", r.r, r.p, ks_p) + fmt(" over 1000 permutations, %.2f s", s);
  return o;
}

Outcome ac4() {
  Outcome o;
  double worst = 0;
  std::mt19937_64 rng(4);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    synthetic::PlantedOptions opt;
    opt.seed = seed;
    opt.questions = 100;
    auto obs = synthetic::planted_corpus(opt);
    for (const auto& metric : obs.metric_names) {
      const auto m = obs.metric_index(metric);
      const auto before = conditional_correlation(obs, metric);
      auto shifted = obs;
      std::map<std::string, double> c;
      for (auto& row : shifted.rows) {
        if (!c.count(row.question_id)) c[row.question_id] = 100.0 * (synthetic::uniform01(rng) - 0.5);
        *row.values[m] += c[row.question_id];
      }
      const auto after = conditional_correlation(shifted, metric);
      worst = std::max(worst, std::abs(after.r - before.r));
    }
  }
  o.require(worst < 1e-12, fmt("max |delta r| = %.3g", worst));
  if (o.pass) o.detail = fmt("max |delta r| = %.3g over 20 metric/seed pairs", worst);
  return o;
}

Outcome ac5() {
  Outcome o;
  double worst_b = 0, worst_s = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const auto sim = synthetic::simulate_glmm(300, 16, 0.0, -0.5, 1.0, 5000 + seed);
    GlmmOptions opt;
    opt.standardize = false;
    const auto fit = fit_glmm(sim.group, sim.x, sim.y, opt);
    o.require(fit.converged, "seed " + std::to_string(seed) + " did not converge");
    worst_b = std::max(worst_b, std::abs(fit.beta1 + 0.5));
    worst_s = std::max(worst_s, std::abs(fit.sigma_u - 1.0));
  }
  o.require(worst_b <= 0.15, fmt("max |beta1 + 0.5| = %.3f", worst_b));
  o.require(worst_s <= 0.3, fmt("max |sigma_u - 1| = %.3f", worst_s));

  std::size_t implicating = 0, concordant = 0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    synthetic::PlantedOptions opt;
    opt.seed = 700 + seed;
    opt.planted = {"fsf", "length"};
    const auto obs = synthetic::planted_corpus(opt);
    std::vector<CorrelationResult> cs;
    std::vector<GlmmFit> gs;
    for (const char* m : {"fsf", "length"}) {
      cs.push_back(conditional_correlation(obs, m));
      gs.push_back(fit_glmm(obs, m));
    }
    const auto rep = concordance_report(cs, gs);
    implicating += rep.implicating;
    concordant += rep.concordant;
  }
  o.require(implicating == 6 && concordant == 6,
            "planted concordance " + std::to_string(concordant) + "/" + std::to_string(implicating));
  if (o.pass) o.detail = fmt("20 seeds: max |db1|=%.3f, max |dsigma|=%.3f; concordance 6/6", worst_b, worst_s);
  return o;
}

Outcome ac6() {
  Outcome o;
  o.require(BootstrapOptions{}.replicates == 200, "default B is not 200");
  o.require(synthetic::PoolOptions{}.pool_size == 64 && RunConfig{}.pool_size == 64, "default pool size is not 64");

  std::mt19937_64 rng(6);
  std::vector<Problem> perfect(30), independent(30);
  std::size_t correct_total = 0;
  for (std::size_t j = 0; j < 30; ++j) {
    for (int i = 0; i < 64; ++i) {
      const bool c = synthetic::uniform01(rng) < 0.4;
      Candidate a;
      a.trace_id = "t" + std::to_string(i);
      a.correct = c;
      a.fsf = c ? 0.1 : 0.9;
      perfect[j].candidates.push_back(a);
      a.fsf = synthetic::uniform01(rng);
      independent[j].candidates.push_back(a);
      correct_total += c ? 1 : 0;
    }
  }
  const auto ep = bootstrap_pass1(perfect, Selector::FSF, Direction::LowerBetter, {200, 1});
  o.require(ep.pass1_mean == 1.0, fmt("perfect metric mean %.4f", ep.pass1_mean));
  const double base = double(correct_total) / (30.0 * 64.0);
  const auto ei = bootstrap_pass1(independent, Selector::FSF, Direction::LowerBetter, {200, 1});
  o.require(std::abs(ei.pass1_mean - base) <= 3 * ei.pass1_sd,
            fmt("independent metric %.4f vs base %.4f (sd %.4f)", ei.pass1_mean, base, ei.pass1_sd));

  const auto pools = synthetic::planted_pools({});
  const auto f = bootstrap_pass1(pools, Selector::FSF, Direction::LowerBetter, {200, 11});
  const auto r = bootstrap_pass1(pools, Selector::Random, Direction::LowerBetter, {200, 11});
  o.require(f.pass1_mean - r.pass1_mean >= 0.05, fmt("fsf %.3f vs random %.3f", f.pass1_mean, r.pass1_mean));
  if (o.pass)
    o.detail = fmt("perfect 1.000; independent %.3f vs base %.3f;", ei.pass1_mean, base) +
               fmt(" fsf %.3f vs random %.3f", f.pass1_mean, r.pass1_mean);
  return o;
}

Outcome ac7() {
  Outcome o;
  testing::TempDir dir;
  testing::edit::Fixture fx;
  ClientConfig cc;
  cc.cache_dir = dir.path();
  cc.offline = true;
  LlmClient client(cc, nullptr);
  ContinuationConfig cfg;
  fx.populate(client, cfg);
  const auto q = testing::edit::question();
  std::map<std::pair<int, int>, double> acc;
  for (const auto& cell : testing::edit::cells()) {
    const auto plan = fx.plan(client, cell);
    o.require(plan.partial_cot == cell.expected_prefix,
              std::string("prefix mismatch for ") + std::string(to_string(cell.choice)) + "/" +
                  std::string(to_string(cell.variant)));
    const auto out = continuation_accuracy(client, q, plan.partial_cot, cfg.default_template, cfg, 8);
    o.require(out.accuracy() == cell.correct / 8.0, "continuation accuracy differs from the fixture");
    acc[{int(cell.choice), int(cell.variant)}] = out.accuracy().value_or(-1);
  }
  for (int c = 0; c < 2; ++c) {
    o.require(acc[{c, int(EditVariant::Reduced)}] > acc[{c, int(EditVariant::Original)}],
              "reduced does not beat original");
  }
  if (o.pass)
    o.detail = fmt("6 prefixes exact; first: original %.3f -> reduced %.3f;", acc[{0, 0}], acc[{0, 1}]) +
               fmt(" last: original %.3f -> reduced %.3f", acc[{1, 0}], acc[{1, 1}]);
  return o;
}

Outcome ac8() {
  Outcome o;
  const auto doc = nlohmann::json::parse(testing::read_text(COTSCOPE_FIXTURE_DIR "/annotator/confusion.json"));
  const auto chunks = segment(doc.at("cot").get<std::string>(), KeywordTable::defaults());
  std::vector<Activity> human, judge;
  for (const auto& s : doc.at("human")) human.push_back(s == "review" ? Activity::Review : Activity::Progress);
  for (const auto& s : doc.at("judge")) judge.push_back(s == "review" ? Activity::Review : Activity::Progress);
  o.require(chunks.size() == human.size(), "fixture does not segment into the labeled chunks");
  if (!o.pass) return o;
  const auto cm = confusion_matrix(chunks, human, judge);
  o.require(cm.review_as_review == 0.538 && cm.review_as_progress == 0.102 && cm.progress_as_review == 0.012 &&
                cm.progress_as_progress == 0.348,
            fmt("cells %.4f/%.4f/%.4f", cm.review_as_review, cm.review_as_progress, cm.progress_as_review));
  if (o.pass) o.detail = "53.8 / 10.2 / 1.2 / 34.8 % of 1000 characters";
  return o;
}

Outcome ac9() {
  Outcome o;
  o.require(empirical_entropy(std::vector<std::string>(8, "a")) == 0.0, "point mass");
  o.require(std::abs(empirical_entropy({"1", "2", "3", "4", "5", "6", "7", "8"}) - std::log(8.0)) < 1e-15, "uniform-8");
  o.require(std::abs(empirical_entropy({"a", "a", "a", "a", "b", "b", "b", "b"}) - std::log(2.0)) < 1e-15, "4/4 split");
  // Hand computation: H = (ln 8, ln 4, ln 2, 0); progressiveness = ln 8 - (ln 4 + ln 2) / 3 = ln 8 - ln 2 = ln 4.
  const std::vector<double> h = {std::log(8.0), std::log(4.0), std::log(2.0), 0.0};
  const double p = progressiveness(h);
  o.require(std::abs(p - std::log(4.0)) < 1e-15, fmt("progressiveness %.17g", p));
  if (o.pass) o.detail = fmt("H in {0, ln 8, ln 2}; progressiveness %.6f = ln 4", p);
  return o;
}

int run(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome ac10(const std::string& cli, const std::string& config) {
  Outcome o;
  testing::TempDir dir;
  const auto a = dir / "run1", b = dir / "run2";
  const auto t0 = std::chrono::steady_clock::now();
  o.require(run("\"" + cli + "\" pipeline -c \"" + config + "\" -o \"" + a.string() + "\" --offline") == 0,
            "first run failed");
  const double s = seconds_since(t0);
  o.require(run("\"" + cli + "\" pipeline -c \"" + config + "\" -o \"" + b.string() + "\" --offline") == 0,
            "second run failed");
  if (!o.pass) return o;
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    ++files;
    o.require(fs::exists(b / rel.string()) && testing::read_text(e.path()) == testing::read_text(b / rel.string()),
              "differs: " + rel.string());
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) files_b += e.is_regular_file() ? 1 : 0;
  o.require(files == files_b, "different file sets");
  o.require(files >= 20, "too few artifacts");
  o.require(s < 60.0, fmt("pipeline took %.2f s", s));
  if (o.pass) o.detail = std::to_string(files) + " files identical" + fmt(", %.2f s per run", s);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: %s <cotscope-cli> <pipeline-config>\n", argv[0]);
    return 2;
  }
  const std::string cli = argv[1], config = argv[2];
  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"AC1 graph-metric oracle equivalence", ac1},
      {"AC2 failed-step fraction definition", ac2},
      {"AC3 conditional correlation engine", ac3},
      {"AC4 fixed-effect invariance", ac4},
      {"AC5 GLMM recovery and concordance", ac5},
      {"AC6 selection harness", ac6},
      {"AC7 editing pipeline", ac7},
      {"AC8 annotator confusion fixture", ac8},
      {"AC9 entropy probe", ac9},
      {"AC10 end-to-end determinism", [&] { return ac10(cli, config); }},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", 10 - failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
