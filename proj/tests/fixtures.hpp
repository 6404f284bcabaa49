#pragma once

// Shared desk-scale fixtures for the unit and acceptance suites.

#include <cmath>
#include <functional>

#include "cascade/ocp.hpp"

namespace fixtures {

inline cascade::Reach reach(int cells, double dx, std::function<double(double)> bed,
                            double width = 2.0, double n = 0.03) {
  cascade::Reach r;
  r.channel_width = width;
  r.manning_n = n;
  r.bathymetry.dx = dx;
  r.bathymetry.cell_centers.resize(cells);
  r.bathymetry.bed_elevation.resize(cells);
  for (int i = 0; i < cells; ++i) {
    r.bathymetry.cell_centers[i] = (i + 0.5) * dx;
    r.bathymetry.bed_elevation[i] = bed(r.bathymetry.cell_centers[i]);
  }
  return r;
}

/// Two-reach cascade stepping down 2 m at the dam, with an outfall weir.
inline cascade::CascadeTopology two_reach_cascade(int cells = 24, double dx = 25.0) {
  cascade::CascadeTopology topo;
  topo.reaches = {reach(cells, dx, [](double) { return 2.0; }),
                  reach(cells, dx, [](double) { return 0.0; })};
  cascade::DamParams dam;
  dam.discharge_coefficient = 0.6;
  dam.gate_width = 1.5;
  dam.max_opening = 1.0;
  dam.turbine_efficiency = 0.9;
  topo.dams = {dam};
  topo.outfall.coefficient = 0.35;
  topo.outfall.crest_elevation = 0.8;
  return topo;
}

/// Upstream pool at depth 2, downstream pool at depth 1.
inline cascade::CascadeState cascade_initial(const cascade::CascadeTopology& topo,
                                             double h_up = 2.0, double h_down = 1.0) {
  cascade::CascadeState s;
  s.push_back(cascade::lake_at_rest(topo.reaches[0],
                                    topo.reaches[0].bathymetry.bed_elevation[0] + h_up));
  for (std::size_t r = 1; r < topo.num_reaches(); ++r)
    s.push_back(cascade::lake_at_rest(topo.reaches[r],
                                      topo.reaches[r].bathymetry.bed_elevation[0] + h_down));
  return s;
}

inline cascade::ForecastModel mild_forecast() {
  cascade::ForecastModel m;
  m.inflow.mean = 2.0;
  m.inflow.seasonal = {{86400.0, 0.6, 0.0}};
  m.inflow.ar_coefficient = 0.6;
  m.inflow.noise_std = 0.3;
  m.price.mean = 50.0;
  m.price.seasonal = {{86400.0, 20.0, 0.5}};
  m.price.ar_coefficient = 0.5;
  m.price.noise_std = 4.0;
  return m;
}

/// Small wet instance: 1 dam, short horizon, everything comfortably inside
/// the state bounds.
inline cascade::OcpInstance small_instance(int n_intervals = 3, double interval = 600.0,
                                           int n_scenarios = 2, std::uint64_t seed = 77) {
  cascade::OcpInstance inst;
  inst.topology = two_reach_cascade();
  inst.initial_state = cascade_initial(inst.topology);
  const cascade::ForecastModel model = mild_forecast();
  const cascade::SamplePath prefix = cascade::sample_path(model, interval, interval, seed).prefix(0.0);
  inst.fan = cascade::build_scenario_fan(model, prefix, n_scenarios,
                                         n_intervals * interval, seed + 1);
  inst.objective.h_min = 0.1;
  inst.objective.h_max = 6.0;
  inst.objective.velocity_bound = 4.0;
  inst.objective.margin = 0.05;
  inst.objective.barrier_weight = 1e-3;
  inst.objective.c_v = 0.5;
  inst.objective.c_z = 2.0;
  inst.sim.solver = cascade::SolverChoice::semi_implicit;
  inst.sim.dt_semi_implicit = 60.0;
  return inst;
}

}  // namespace fixtures
