#include <doctest.h>

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <map>
#include <random>

#include "../oracles/logistic_irls.hpp"
#include "../support.hpp"
#include "cotscope/stats.hpp"
#include "cotscope/synthetic.hpp"

using namespace cotscope;

namespace {

// Independent residualized Pearson: long double, string-keyed groups.
struct OracleCorrelation {
  bool computable = false;
  double r = 0, p = 1;
  std::size_t n = 0, q = 0;
};

OracleCorrelation oracle_correlation(const ObservationSet& obs, std::size_t m) {
  std::map<std::string, std::vector<std::pair<long double, long double>>> by_q;
  for (const auto& row : obs.rows) {
    if (row.values[m]) by_q[row.question_id].emplace_back(*row.values[m], row.correct ? 1.0L : 0.0L);
  }
  long double sxx = 0, syy = 0, sxy = 0;
  OracleCorrelation out;
  for (const auto& [q, pts] : by_q) {
    long double mx = 0, my = 0;
    for (auto [x, y] : pts) mx += x, my += y;
    mx /= pts.size();
    my /= pts.size();
    if (my == 0 || my == 1) continue;
    ++out.q;
    out.n += pts.size();
    for (auto [x, y] : pts) {
      sxx += (x - mx) * (x - mx);
      syy += (y - my) * (y - my);
      sxy += (x - mx) * (y - my);
    }
  }
  const double df = double(out.n) - double(out.q) - 1;
  if (df < 3 || sxx == 0) return out;
  out.computable = true;
  out.r = double(sxy / std::sqrt(sxx * syy));
  const double t = out.r * std::sqrt(df / (1 - out.r * out.r));
  out.p = 2 * boost::math::cdf(boost::math::complement(boost::math::students_t(df), std::abs(t)));
  return out;
}

ObservationSet tiny_set() {
  ObservationSet o;
  o.metric_names = {"m"};
  auto add = [&](std::string q, bool c, double v) {
    Observation r;
    r.question_id = q;
    r.trace_id = q + "-" + std::to_string(o.rows.size());
    r.model_id = "model";
    r.correct = c;
    r.values = {v};
    o.rows.push_back(r);
  };
  for (int q = 0; q < 6; ++q) {
    for (int i = 0; i < 4; ++i) add("q" + std::to_string(q), i % 2 == 0, i % 2 == 0 ? 1.0 + q : double(q));
  }
  return o;
}

void add_constant_per_question(ObservationSet& o, std::size_t m, std::mt19937_64& rng) {
  std::map<std::string, double> shift;
  for (auto& row : o.rows) {
    if (!shift.count(row.question_id)) shift[row.question_id] = synthetic::normal(rng) * 5.0;
    if (row.values[m]) *row.values[m] += shift[row.question_id];
  }
}

}  // namespace

TEST_SUITE("stats") {
  TEST_CASE("metric equal to correctness gives r = 1") {
    const auto r = conditional_correlation(tiny_set(), "m");
    REQUIRE(r.computable);
    CHECK(r.r == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.p == 0.0);
    CHECK(r.stars == Stars::Three);
  }

  TEST_CASE("metric constant within questions is not computable") {
    auto o = tiny_set();
    for (auto& row : o.rows) row.values[0] = std::stod(row.question_id.substr(1));
    const auto r = conditional_correlation(o, "m");
    CHECK_FALSE(r.computable);
    CHECK(r.note.find("variance") != std::string::npos);
  }

  TEST_CASE("stars thresholds") {
    CHECK(stars_for(0.001) == Stars::Three);
    CHECK(stars_for(0.0011) == Stars::Two);
    CHECK(stars_for(0.01) == Stars::Two);
    CHECK(stars_for(0.05) == Stars::One);
    CHECK(stars_for(0.0501) == Stars::NS);
  }

  TEST_CASE("planted corpus: negative, highly significant, and matches the oracle") {
    synthetic::PlantedOptions opt;
    opt.seed = 17;
    const auto obs = synthetic::planted_corpus(opt);
    CHECK(obs.rows.size() == 4800);
    const auto r = conditional_correlation(obs, "fsf");
    REQUIRE(r.computable);
    CHECK(r.r < 0);
    CHECK(r.p < 0.001);
    const auto o = oracle_correlation(obs, obs.metric_index("fsf"));
    CHECK(r.n_used == o.n);
    CHECK(r.q_used == o.q);
    CHECK(std::abs(r.r - o.r) < 1e-12);
    CHECK(r.p == doctest::Approx(o.p).epsilon(1e-9));
    const auto null = conditional_correlation(obs, "noise");
    const auto on = oracle_correlation(obs, obs.metric_index("noise"));
    CHECK(std::abs(null.r - on.r) < 1e-12);
  }

  TEST_CASE("property: per-question constants leave r and p unchanged") {
    std::mt19937_64 rng(1);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      synthetic::PlantedOptions opt;
      opt.seed = seed;
      opt.questions = 60;
      auto obs = synthetic::planted_corpus(opt);
      const auto before = conditional_correlation(obs, "fsf");
      add_constant_per_question(obs, obs.metric_index("fsf"), rng);
      const auto after = conditional_correlation(obs, "fsf");
      CHECK(std::abs(before.r - after.r) < 1e-12);
      CHECK(after.p == doctest::Approx(before.p).epsilon(1e-9));
    }
  }

  TEST_CASE("property: negating the metric negates r and beta1") {
    synthetic::PlantedOptions opt;
    opt.seed = 3;
    opt.questions = 80;
    auto obs = synthetic::planted_corpus(opt);
    const auto m = obs.metric_index("fsf");
    const auto r = conditional_correlation(obs, "fsf");
    const auto g = fit_glmm(obs, "fsf");
    for (auto& row : obs.rows) row.values[m] = -*row.values[m];
    const auto rn = conditional_correlation(obs, "fsf");
    const auto gn = fit_glmm(obs, "fsf");
    CHECK(rn.r == -r.r);
    CHECK(rn.p == r.p);
    CHECK(gn.beta1 == doctest::Approx(-g.beta1).epsilon(1e-5));
    CHECK(gn.p_wald == doctest::Approx(g.p_wald).epsilon(1e-3));
  }

  TEST_CASE("property: deleting an all-correct question changes nothing") {
    synthetic::PlantedOptions opt;
    opt.seed = 4;
    opt.questions = 60;
    auto obs = synthetic::planted_corpus(opt);
    // Force one question to be all correct, then delete it.
    const std::string victim = obs.rows[20].question_id;
    for (auto& row : obs.rows) if (row.question_id == victim) row.correct = true;
    const auto with = conditional_correlation(obs, "fsf");
    ObservationSet without = obs;
    std::erase_if(without.rows, [&](const Observation& r) { return r.question_id == victim; });
    const auto wo = conditional_correlation(without, "fsf");
    CHECK(with.r == wo.r);
    CHECK(with.p == wo.p);
    CHECK(with.n_used == wo.n_used);
    CHECK(with.q_used == wo.q_used);
  }

  TEST_CASE("undefined metric values are deleted pairwise") {
    auto o = tiny_set();
    o.rows[0].values[0] = std::nullopt;
    const auto r = conditional_correlation(o, "m");
    CHECK(r.n_used == 23);
  }

  TEST_CASE("spearman ranks are monotone invariant") {
    synthetic::PlantedOptions opt;
    opt.seed = 8;
    opt.questions = 50;
    auto obs = synthetic::planted_corpus(opt);
    const auto a = conditional_correlation(obs, "fsf", CorrelationKind::Spearman);
    const auto m = obs.metric_index("fsf");
    for (auto& row : obs.rows) row.values[m] = std::exp(*row.values[m]);
    const auto b = conditional_correlation(obs, "fsf", CorrelationKind::Spearman);
    CHECK(a.r == b.r);
    CHECK(a.r < 0);
  }

  TEST_CASE("stratum with 99 rows is skipped and reported") {
    auto obs = synthetic::planted_corpus({.questions = 20, .traces_per_question = 16, .seed = 2});
    std::size_t k = 0;
    for (auto& row : obs.rows) row.difficulty = k++ < 99 ? "small" : "big";
    const auto res = stratified_correlation(obs, "fsf", {"small", "big"}, 100);
    REQUIRE(res.skipped.size() == 1);
    CHECK(res.skipped[0] == std::pair<std::string, std::size_t>{"small", 99});
    REQUIRE(res.results.size() == 1);
    CHECK(res.results[0].stratum == "big");
  }

  TEST_CASE("identical strata give identical results") {
    auto base = synthetic::planted_corpus({.questions = 40, .traces_per_question = 16, .seed = 6});
    ObservationSet twice;
    twice.metric_names = base.metric_names;
    for (const char* label : {"a", "b"}) {
      for (auto row : base.rows) {
        row.difficulty = label;
        row.question_id = std::string(label) + row.question_id;
        twice.rows.push_back(row);
      }
    }
    const auto res = stratified_correlation(twice, "fsf", {"a", "b"}, 100);
    REQUIRE(res.results.size() == 2);
    CHECK(res.results[0].r == res.results[1].r);
    CHECK(res.results[0].p == res.results[1].p);
  }

  TEST_CASE("effect planted only in the hard stratum") {
    synthetic::PlantedOptions opt;
    opt.seed = 21;
    opt.strata = {"easy", "hard"};
    opt.effect_strata = {"hard"};
    const auto obs = synthetic::planted_corpus(opt);
    const auto res = stratified_correlation(obs, "fsf", {"easy", "hard"}, 100);
    REQUIRE(res.results.size() == 2);
    CHECK(res.results[0].stratum == "easy");
    CHECK(res.results[0].p > 0.05);
    CHECK(res.results[1].r < 0);
    CHECK(res.results[1].p < 0.001);
  }

  TEST_CASE("metrics.csv round trip keeps undefined cells") {
    testing::TempDir dir;
    auto obs = tiny_set();
    obs.rows[3].values[0] = std::nullopt;
    obs.rows[4].values[0] = 0.1 + 0.2;
    obs.rows[5].difficulty = "level-3";
    write_metrics_csv(obs, dir / "m.csv");
    const auto back = read_metrics_csv(dir / "m.csv");
    REQUIRE(back.rows.size() == obs.rows.size());
    for (std::size_t i = 0; i < obs.rows.size(); ++i) {
      CHECK(back.rows[i].values == obs.rows[i].values);
      CHECK(back.rows[i].difficulty == obs.rows[i].difficulty);
      CHECK(back.rows[i].correct == obs.rows[i].correct);
    }
  }
}

TEST_SUITE("glmm") {
  TEST_CASE("single question without outcome variance is an error") {
    CHECK_THROWS_AS(fit_glmm({0, 0, 0}, {1.0, 2.0, 3.0}, {1, 1, 1}), ValidationError);
  }

  TEST_CASE("pinned tiny sigma reduces to logistic regression") {
    const auto sim = synthetic::simulate_glmm(200, 10, 0.3, -0.7, 0.0, 5);
    GlmmOptions opt;
    opt.fixed_sigma = 1e-4;
    opt.standardize = false;
    const auto fit = fit_glmm(sim.group, sim.x, sim.y, opt);
    const auto [b0, b1] = oracle::logistic_irls(sim.x, sim.y);
    CHECK(fit.converged);
    CHECK(std::abs(fit.beta0 - b0) < 1e-3);
    CHECK(std::abs(fit.beta1 - b1) < 1e-3);
  }

  TEST_CASE("recovers simulated parameters") {
    const auto sim = synthetic::simulate_glmm(300, 16, 0.2, -0.5, 1.0, 11);
    GlmmOptions opt;
    opt.standardize = false;
    const auto fit = fit_glmm(sim.group, sim.x, sim.y, opt);
    CHECK(fit.converged);
    CHECK(std::abs(fit.beta1 + 0.5) < 0.15);
    CHECK(std::abs(fit.sigma_u - 1.0) < 0.3);
    CHECK(fit.p_wald < 0.001);
    CHECK(fit.n == 4800);
    CHECK(fit.q == 300);
  }

  TEST_CASE("null metric is rarely significant") {
    int significant = 0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
      const auto sim = synthetic::simulate_glmm(100, 16, 0.0, 0.0, 1.0, 100 + s);
      if (fit_glmm(sim.group, sim.x, sim.y).p_wald <= 0.05) ++significant;
    }
    CHECK(significant <= seeds / 10);
  }

  TEST_CASE("no heterogeneity drives sigma to the floor") {
    const auto sim = synthetic::simulate_glmm(50, 16, 0.0, 1.0, 0.0, 3);
    const auto fit = fit_glmm(sim.group, sim.x, sim.y);
    CHECK(fit.sigma_u < 0.3);
  }

  TEST_CASE("glmm.csv round trip") {
    testing::TempDir dir;
    GlmmFit f;
    f.model = "m";
    f.metric = "fsf";
    f.beta0 = 0.1;
    f.beta1 = -0.2;
    f.se1 = 0.05;
    f.p_wald = 1e-5;
    f.sigma_u = 0.9;
    f.converged = true;
    f.n = 10;
    f.q = 2;
    f.iterations = 7;
    f.diagnostics = "ok, fine";
    write_glmm_csv({f}, dir / "g.csv");
    const auto back = read_glmm_csv(dir / "g.csv");
    REQUIRE(back.size() == 1);
    CHECK(back[0].beta1 == f.beta1);
    CHECK(back[0].diagnostics == f.diagnostics);
    CHECK(back[0].converged);
  }
}

TEST_SUITE("concordance") {
  CorrelationResult corr(double r, double p) {
    CorrelationResult c;
    c.model = "m";
    c.metric = "x";
    c.computable = true;
    c.r = r;
    c.p = p;
    c.stars = stars_for(p);
    return c;
  }
  GlmmFit fit(double b, double p) {
    GlmmFit g;
    g.model = "m";
    g.metric = "x";
    g.beta1 = b;
    g.p_wald = p;
    g.converged = true;
    return g;
  }

  TEST_CASE("same-signed significant results are concordant") {
    const auto rep = concordance_report({corr(-0.3, 1e-5)}, {fit(-0.4, 1e-4)});
    CHECK(rep.implicating == 1);
    CHECK(rep.concordant == 1);
    CHECK(rep.rate() == 1.0);
  }

  TEST_CASE("a non-significant correlation does not implicate") {
    const auto rep = concordance_report({corr(-0.01, 0.4)}, {fit(-0.4, 1e-4)});
    CHECK(rep.implicating == 0);
    CHECK_FALSE(rep.rate().has_value());
  }

  TEST_CASE("opposite signs are discordant") {
    const auto rep = concordance_report({corr(0.3, 1e-5)}, {fit(-0.4, 1e-4)});
    CHECK(rep.implicating == 1);
    CHECK(rep.concordant == 0);
  }

  TEST_CASE("planted metrics are fully concordant") {
    synthetic::PlantedOptions opt;
    opt.seed = 33;
    opt.planted = {"fsf", "length"};
    const auto obs = synthetic::planted_corpus(opt);
    std::vector<CorrelationResult> cs;
    std::vector<GlmmFit> gs;
    for (const char* m : {"fsf", "length"}) {
      cs.push_back(conditional_correlation(obs, m));
      gs.push_back(fit_glmm(obs, m));
    }
    const auto rep = concordance_report(cs, gs);
    CHECK(rep.implicating == 2);
    CHECK(rep.concordant == 2);
  }
}
