#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cascade/rng.hpp"

namespace cascade {

struct SeasonalComponent {
  double period = 86400.0;  // [s]
  double amplitude = 0.0;
  double phase = 0.0;  // [rad]
};

/// Multi-periodic mean plus stationary AR(1) noise. noise_std is the
/// stationary marginal standard deviation (innovations are scaled by
/// sqrt(1 - ar^2) and the initial value is a stationary draw).
struct SignalModel {
  double mean = 0.0;
  std::vector<SeasonalComponent> seasonal;
  double ar_coefficient = 0.0;  // in [0, 1)
  double noise_std = 0.0;

  double deterministic(double t) const;
  void validate() const;
};

/// Forecast signals: inflow [m^3/s] and the demand-weighted price
/// [currency/MWh] (demand is routed through the price path).
struct ForecastModel {
  SignalModel inflow;
  SignalModel price;

  void validate() const;
};

struct SamplePath {
  std::vector<double> times;   // [s]
  std::vector<double> inflow;  // clamped at 0
  std::vector<double> price;
  std::uint64_t seed = 0;

  std::size_t size() const { return times.size(); }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  /// Piecewise-constant lookup (last grid point at or before t).
  double inflow_at(double t) const;
  double price_at(double t) const;
  /// Truncated copy covering [0, t_end].
  SamplePath prefix(double t_end) const;
};

/// Samples one path on the grid {0, dt, ..., >= horizon}. Reproducible per
/// seed; inflow is clamped at 0 after adding noise.
SamplePath sample_path(const ForecastModel& model, double horizon, double dt,
                       std::uint64_t seed);

/// N continuations branching from a shared observed prefix. Every scenario
/// is bitwise identical to the prefix on [0, branch_time].
struct ScenarioFan {
  std::vector<SamplePath> scenarios;
  double branch_time = 0.0;
  std::vector<double> weights;  // sum to 1

  std::size_t size() const { return scenarios.size(); }
};

ScenarioFan build_scenario_fan(const ForecastModel& model, const SamplePath& observed_prefix,
                               int n, double horizon, std::uint64_t seed);

}  // namespace cascade
