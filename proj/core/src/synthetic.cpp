#include "cotscope/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cotscope::synthetic {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

std::string padded(std::string_view prefix, std::size_t i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, i);
  return std::string(prefix) + buf;
}

}  // namespace

ObservationSet planted_corpus(const PlantedOptions& o) {
  ObservationSet obs;
  obs.metric_names = o.planted;
  obs.metric_names.insert(obs.metric_names.end(), o.null_metrics.begin(), o.null_metrics.end());
  std::mt19937_64 rng(splitmix64(o.seed));
  for (std::size_t q = 0; q < o.questions; ++q) {
    const std::string qid = padded("q", q, 4);
    std::optional<std::string> stratum;
    if (!o.strata.empty()) stratum = o.strata[q % o.strata.size()];
    const bool effect = o.effect_strata.empty() ||
                        (stratum && std::find(o.effect_strata.begin(), o.effect_strata.end(), *stratum) !=
                                        o.effect_strata.end());
    const double p = logistic(o.question_logit_sd * normal(rng));
    std::vector<double> offsets(obs.metric_names.size());
    for (auto& off : offsets) off = 2.0 * normal(rng);
    for (std::size_t t = 0; t < o.traces_per_question; ++t) {
      Observation row;
      row.question_id = qid;
      row.trace_id = qid + "-" + padded("t", t, 2);
      row.model_id = o.model_id;
      row.difficulty = stratum;
      row.correct = uniform01(rng) < p;
      for (std::size_t m = 0; m < obs.metric_names.size(); ++m) {
        double v = offsets[m] + normal(rng);
        if (m < o.planted.size() && effect && row.correct) v += o.shift;
        row.values.emplace_back(v);
      }
      obs.rows.push_back(std::move(row));
    }
  }
  return obs;
}

GlmmSimulation simulate_glmm(std::size_t questions, std::size_t per_question, double beta0, double beta1,
                             double sigma, std::uint64_t seed) {
  GlmmSimulation s;
  std::mt19937_64 rng(splitmix64(seed));
  for (std::size_t q = 0; q < questions; ++q) {
    const double u = sigma * normal(rng);
    for (std::size_t i = 0; i < per_question; ++i) {
      const double x = normal(rng);
      s.group.push_back(q);
      s.x.push_back(x);
      s.y.push_back(uniform01(rng) < logistic(beta0 + beta1 * x + u) ? 1 : 0);
    }
  }
  return s;
}

std::vector<Problem> planted_pools(const PoolOptions& o) {
  std::vector<Problem> out;
  std::mt19937_64 rng(splitmix64(o.seed));
  for (std::size_t j = 0; j < o.problems; ++j) {
    Problem p;
    p.question_id = padded("p", j, 3);
    const double base = std::clamp(0.15 + 0.7 * uniform01(rng), 0.0, 1.0);
    for (std::size_t i = 0; i < o.pool_size; ++i) {
      Candidate c;
      c.trace_id = p.question_id + "-" + padded("c", i, 2);
      c.correct = uniform01(rng) < base;
      const double gap = c.correct ? 0.0 : 1.0;
      c.fsf = std::clamp(0.25 + o.fsf_gap * gap + 0.06 * normal(rng), 0.0, 1.0);
      c.length = std::max(100.0, 8000.0 + 1500.0 * gap + 3000.0 * normal(rng));
      c.review_ratio = std::clamp(0.3 + 0.03 * gap + 0.1 * normal(rng), 0.0, 1.0);
      p.candidates.push_back(std::move(c));
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace cotscope::synthetic
