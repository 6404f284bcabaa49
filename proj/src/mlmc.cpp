#include "cascade/mlmc.hpp"

#include <cmath>
#include <stdexcept>

#include "cascade/types.hpp"

namespace cascade {

std::uint64_t mlmc_sample_seed(std::uint64_t seed, int level, int index, int retry) {
  std::uint64_t k = rng_split(seed, 0x4d4c4d43ULL);  // estimator stream
  k = rng_split(k, static_cast<std::uint64_t>(level));
  k = rng_split(k, static_cast<std::uint64_t>(index));
  if (retry > 0) k = rng_split(k, 0xdead0000ULL + static_cast<std::uint64_t>(retry));
  return k;
}

MlmcResult mlmc_estimate(const std::vector<MlmcLevel>& levels, const std::vector<int>& m,
                         const MlmcQoi& qoi, const ForecastModel& model, double horizon,
                         double path_dt, std::uint64_t seed) {
  if (levels.empty()) throw std::invalid_argument("mlmc needs at least one level");
  if (m.size() != levels.size())
    throw std::invalid_argument("one sample count per level required");

  const int num_levels = static_cast<int>(levels.size());
  MlmcResult res;
  res.level_means.assign(num_levels, 0.0);
  res.level_variances.assign(num_levels, 0.0);
  res.samples.assign(num_levels, 0);
  res.resampled.assign(num_levels, 0);

  constexpr int kMaxRetries = 8;

  for (int l = 0; l < num_levels; ++l) {
    if (m[l] < 1) throw std::invalid_argument("sample counts must be >= 1");
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < m[l]; ++i) {
      double y = 0.0;
      bool ok = false;
      for (int retry = 0; retry <= kMaxRetries && !ok; ++retry) {
        const SamplePath xi =
            sample_path(model, horizon, path_dt, mlmc_sample_seed(seed, l, i, retry));
        try {
          const double fine = qoi(levels[l].solver(xi));
          res.total_cost += levels[l].cost;
          double coarse = 0.0;
          if (l > 0) {
            coarse = qoi(levels[l - 1].solver(xi));
            res.total_cost += levels[l - 1].cost;
          }
          y = fine - coarse;
          ok = true;
        } catch (const std::exception&) {
          ++res.resampled[l];
        }
      }
      if (!ok) throw NonconvergenceError("mlmc sample failed after retries", 0.0);
      sum += y;
      sum_sq += y * y;
      ++res.samples[l];
    }
    const double mean = sum / m[l];
    res.level_means[l] = mean;
    res.level_variances[l] = m[l] > 1 ? (sum_sq - m[l] * mean * mean) / (m[l] - 1) : 0.0;
    res.estimate += mean;
  }
  return res;
}

MlmcResult mc_estimate(const MlmcLevel& level, int m, const MlmcQoi& qoi,
                       const ForecastModel& model, double horizon, double path_dt,
                       std::uint64_t seed) {
  return mlmc_estimate({level}, {m}, qoi, model, horizon, path_dt, seed);
}

}  // namespace cascade
