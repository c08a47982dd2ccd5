#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "cotscope/interventions.hpp"
#include "cotscope/stats.hpp"

namespace cotscope::synthetic {

/// Uniform on [0, 1) from the top 53 bits.
double uniform01(std::mt19937_64& rng);
/// Standard normal by Box-Muller (one value per call).
double normal(std::mt19937_64& rng);

struct PlantedOptions {
  std::size_t questions = 300;
  std::size_t traces_per_question = 16;
  std::uint64_t seed = 1;
  std::string model_id = "synthetic";
  /// Metrics whose correct traces are shifted by `shift` within-question SDs.
  std::vector<std::string> planted = {"fsf"};
  /// Metrics with no relation to correctness.
  std::vector<std::string> null_metrics = {"noise"};
  double shift = -1.0;
  /// Difficulty labels assigned round-robin to questions; empty = no labels.
  std::vector<std::string> strata;
  /// If non-empty, the shift applies only to questions in these strata.
  std::vector<std::string> effect_strata;
  double question_logit_sd = 1.5;
};

/// Question fixed effects on both sides: each question draws a base accuracy
/// and a metric offset; within a question the metric is N(offset, 1), minus
/// |shift| on correct traces for planted metrics.
ObservationSet planted_corpus(const PlantedOptions& options);

struct GlmmSimulation {
  std::vector<std::size_t> group;
  std::vector<double> x;
  std::vector<int> y;
};

/// Draws y from logit P = beta0 + beta1 x + u_q with x ~ N(0,1), u_q ~ N(0, sigma^2).
GlmmSimulation simulate_glmm(std::size_t questions, std::size_t per_question, double beta0, double beta1,
                             double sigma, std::uint64_t seed);

struct PoolOptions {
  std::size_t problems = 30;
  std::size_t pool_size = 64;
  std::uint64_t seed = 7;
  /// Mean FSF gap between incorrect and correct candidates.
  double fsf_gap = 0.15;
};

/// Selection pools whose FSF is lower on correct candidates; length and review
/// ratio carry a weaker version of the same signal.
std::vector<Problem> planted_pools(const PoolOptions& options);

}  // namespace cotscope::synthetic
