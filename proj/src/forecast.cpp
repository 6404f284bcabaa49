#include "cascade/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cascade {

namespace {
constexpr double kTwoPi = 6.283185307179586477;

enum SignalId : std::uint64_t { kInflow = 1, kPrice = 2 };

/// AR(1) continuation with stationary marginal std. The previous noise value
/// enters as prev; counters index the innovation sequence.
void fill_signal(const SignalModel& m, const CounterRng& rng, const std::vector<double>& times,
                 std::size_t first, double prev_noise, bool clamp_zero,
                 std::vector<double>& out) {
  const double rho = m.ar_coefficient;
  const double innov = m.noise_std * std::sqrt(std::max(0.0, 1.0 - rho * rho));
  double e = prev_noise;
  for (std::size_t k = first; k < times.size(); ++k) {
    if (k == 0) {
      e = m.noise_std * rng.normal(0);  // stationary start
    } else {
      e = rho * e + innov * rng.normal(k);
    }
    double v = m.deterministic(times[k]) + e;
    if (clamp_zero) v = std::max(0.0, v);
    out[k] = v;
  }
}

}  // namespace

double SignalModel::deterministic(double t) const {
  double v = mean;
  for (const SeasonalComponent& s : seasonal)
    v += s.amplitude * std::sin(kTwoPi * t / s.period + s.phase);
  return v;
}

void SignalModel::validate() const {
  if (!(ar_coefficient >= 0.0 && ar_coefficient < 1.0))
    throw std::invalid_argument("AR coefficient must lie in [0, 1)");
  if (noise_std < 0.0) throw std::invalid_argument("noise std must be nonnegative");
  for (const SeasonalComponent& s : seasonal) {
    if (!(s.period > 0.0)) throw std::invalid_argument("seasonal period must be positive");
    if (s.amplitude < 0.0) throw std::invalid_argument("seasonal amplitude must be nonnegative");
  }
}

void ForecastModel::validate() const {
  inflow.validate();
  price.validate();
}

double SamplePath::inflow_at(double t) const {
  if (times.empty()) return 0.0;
  const double step = dt();
  if (step <= 0.0) return inflow.front();
  const auto k = static_cast<std::size_t>(
      std::clamp(std::floor(t / step), 0.0, static_cast<double>(times.size() - 1)));
  return inflow[k];
}

double SamplePath::price_at(double t) const {
  if (times.empty()) return 0.0;
  const double step = dt();
  if (step <= 0.0) return price.front();
  const auto k = static_cast<std::size_t>(
      std::clamp(std::floor(t / step), 0.0, static_cast<double>(times.size() - 1)));
  return price[k];
}

SamplePath SamplePath::prefix(double t_end) const {
  SamplePath p;
  p.seed = seed;
  for (std::size_t k = 0; k < times.size() && times[k] <= t_end + 1e-9; ++k) {
    p.times.push_back(times[k]);
    p.inflow.push_back(inflow[k]);
    p.price.push_back(price[k]);
  }
  return p;
}

SamplePath sample_path(const ForecastModel& model, double horizon, double dt,
                       std::uint64_t seed) {
  if (!(horizon > 0.0) || !(dt > 0.0)) throw std::invalid_argument("horizon and dt must be positive");
  SamplePath path;
  path.seed = seed;
  const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-12));
  path.times.resize(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) path.times[k] = static_cast<double>(k) * dt;
  path.inflow.resize(path.times.size());
  path.price.resize(path.times.size());

  const CounterRng root(seed);
  fill_signal(model.inflow, root.split(kInflow), path.times, 0, 0.0, true, path.inflow);
  fill_signal(model.price, root.split(kPrice), path.times, 0, 0.0, false, path.price);
  return path;
}

ScenarioFan build_scenario_fan(const ForecastModel& model, const SamplePath& observed_prefix,
                               int n, double horizon, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("fan needs at least one scenario");
  ScenarioFan fan;
  fan.branch_time = observed_prefix.times.empty() ? 0.0 : observed_prefix.times.back();
  fan.weights.assign(n, 1.0 / n);

  const double dt = observed_prefix.times.size() > 1 ? observed_prefix.dt() : horizon / 24.0;
  const std::size_t prefix_len = observed_prefix.times.size();

  // Noise state at the branch point, reconstructed from the prefix. The
  // inflow value may have been clamped; reconstruct from the raw difference.
  double e_inflow = 0.0, e_price = 0.0;
  if (prefix_len > 0) {
    e_inflow = observed_prefix.inflow.back() -
               model.inflow.deterministic(observed_prefix.times.back());
    e_price = observed_prefix.price.back() -
              model.price.deterministic(observed_prefix.times.back());
  }

  const CounterRng root(seed);
  for (int i = 0; i < n; ++i) {
    SamplePath s;
    s.seed = seed;
    s.times = observed_prefix.times;
    s.inflow = observed_prefix.inflow;
    s.price = observed_prefix.price;
    double t = fan.branch_time;
    while (t < horizon - 1e-9) {
      t += dt;
      s.times.push_back(t);
    }
    s.inflow.resize(s.times.size());
    s.price.resize(s.times.size());
    const CounterRng scen = root.split(1000 + static_cast<std::uint64_t>(i));
    fill_signal(model.inflow, scen.split(kInflow), s.times, prefix_len, e_inflow, true, s.inflow);
    fill_signal(model.price, scen.split(kPrice), s.times, prefix_len, e_price, false, s.price);
    fan.scenarios.push_back(std::move(s));
  }
  return fan;
}

}  // namespace cascade
