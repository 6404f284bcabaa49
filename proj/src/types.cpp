#include "cascade/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace cascade {

void Bathymetry::validate() const {
  if (size() < 3) throw std::invalid_argument("bathymetry needs at least 3 cells");
  if (!(dx > 0.0)) throw std::invalid_argument("bathymetry dx must be positive");
  if (cell_centers.size() != bed_elevation.size())
    throw std::invalid_argument("bathymetry arrays disagree in length");
  for (double z : bed_elevation)
    if (!std::isfinite(z)) throw std::invalid_argument("bed elevation must be finite");
}

void DamParams::validate() const {
  if (!(discharge_coefficient > 0.0 && discharge_coefficient <= 2.0))
    throw std::invalid_argument("dam Cd must lie in (0, 2]");
  if (!(gate_width > 0.0)) throw std::invalid_argument("dam gate width must be positive");
  if (!(max_opening > 0.0)) throw std::invalid_argument("dam max opening must be positive");
  if (!(turbine_efficiency > 0.0 && turbine_efficiency <= 1.0))
    throw std::invalid_argument("turbine efficiency must lie in (0, 1]");
}

void CascadeTopology::validate() const {
  if (reaches.empty()) throw std::invalid_argument("topology needs at least one reach");
  if (dams.size() + 1 != reaches.size())
    throw std::invalid_argument("topology needs exactly reaches-1 dams");
  for (const Reach& r : reaches) {
    r.bathymetry.validate();
    if (!(r.manning_n > 0.0)) throw std::invalid_argument("manning n must be positive");
    if (!(r.channel_width > 0.0)) throw std::invalid_argument("channel width must be positive");
  }
  for (const DamParams& d : dams) d.validate();
}

double total_volume(const ReachState& state, const Reach& reach) {
  double v = 0.0;
  for (double a : state.area) v += a * reach.bathymetry.dx;
  return v;
}

double total_volume(const CascadeState& states, const CascadeTopology& topology) {
  double v = 0.0;
  for (std::size_t r = 0; r < states.size(); ++r) v += total_volume(states[r], topology.reaches[r]);
  return v;
}

ReachState lake_at_rest(const Reach& reach, double eta) {
  ReachState s;
  const std::size_t n = reach.bathymetry.size();
  s.area.resize(n);
  s.discharge.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double h = std::max(0.0, eta - reach.bathymetry.bed_elevation[i]);
    s.area[i] = h * reach.channel_width;
  }
  return s;
}

CascadeState lake_at_rest(const CascadeTopology& topology, double eta) {
  CascadeState states;
  states.reserve(topology.reaches.size());
  for (const Reach& r : topology.reaches) states.push_back(lake_at_rest(r, eta));
  return states;
}

void write_state_csv(const std::string& path, const ReachState& state, const Reach& reach) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "x,z_b,A,Q\n";
  char line[128];
  for (std::size_t i = 0; i < state.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.17g,%.17g,%.17g,%.17g\n",
                  reach.bathymetry.cell_centers[i], reach.bathymetry.bed_elevation[i],
                  state.area[i], state.discharge[i]);
    out << line;
  }
}

}  // namespace cascade
