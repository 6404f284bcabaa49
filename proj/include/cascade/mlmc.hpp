#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cascade/forecast.hpp"

namespace cascade {

/// A discretization level: a forward solver mapping a sample path to a
/// solution vector (any per-level layout), plus its nominal cost. Solvers
/// signal failure by throwing; the sample is discarded and redrawn.
struct MlmcLevel {
  std::function<std::vector<double>(const SamplePath&)> solver;
  double cost = 1.0;
};

using MlmcQoi = std::function<double(const std::vector<double>&)>;

struct MlmcResult {
  double estimate = 0.0;
  std::vector<double> level_means;      // mean of Y_l per level
  std::vector<double> level_variances;  // sample variance of Y_l per level
  std::vector<int> samples;             // M_l actually averaged
  std::vector<int> resampled;           // discarded-and-redrawn count per level
  double total_cost = 0.0;
};

/// Telescoping multilevel estimator E = sum_l mean_i [Q(u^{l,i}) - Q(u^{l-1,i})]
/// with Q(u^{-1}) = 0. Adjacent levels consume the identical sample path
/// (coupled sampling); per-sample paths derive from (seed, level, index) so
/// a single-level call is bit-identical to plain Monte Carlo with the same
/// seed.
MlmcResult mlmc_estimate(const std::vector<MlmcLevel>& levels, const std::vector<int>& m,
                         const MlmcQoi& qoi, const ForecastModel& model, double horizon,
                         double path_dt, std::uint64_t seed);

/// Plain Monte Carlo at a single level, sharing the mlmc seed derivation.
MlmcResult mc_estimate(const MlmcLevel& level, int m, const MlmcQoi& qoi,
                       const ForecastModel& model, double horizon, double path_dt,
                       std::uint64_t seed);

/// Seed of sample i at level l (exposed so oracles can match the stream).
std::uint64_t mlmc_sample_seed(std::uint64_t seed, int level, int index, int retry = 0);

}  // namespace cascade
