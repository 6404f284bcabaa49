#include "cascade/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cascade {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

bool state_finite(const CascadeState& states) {
  for (const ReachState& s : states) {
    for (double a : s.area)
      if (!std::isfinite(a)) return false;
    for (double q : s.discharge)
      if (!std::isfinite(q)) return false;
  }
  return true;
}

double norm2(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double neg_part_norm2(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v)
    if (x < 0.0) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

void ControlSchedule::validate(const CascadeTopology& topology) const {
  if (t_grid.size() < 2) throw std::invalid_argument("schedule needs at least one interval");
  for (std::size_t k = 1; k < t_grid.size(); ++k)
    if (!(t_grid[k] > t_grid[k - 1])) throw std::invalid_argument("schedule grid not increasing");
  if (v.size() != topology.num_dams() || z.size() != topology.num_dams())
    throw std::invalid_argument("schedule needs one v and z row per dam");
  for (std::size_t d = 0; d < v.size(); ++d) {
    if (v[d].size() != static_cast<std::size_t>(intervals()) ||
        z[d].size() != static_cast<std::size_t>(intervals()))
      throw std::invalid_argument("schedule rows must match the interval count");
    for (double vi : v[d])
      if (vi < 0.0 || vi > topology.dams[d].max_opening)
        throw std::invalid_argument("gate opening outside [0, v_max]");
    for (double zi : z[d]) {
      if (relaxed) {
        if (zi < 0.0 || zi > 1.0) throw std::invalid_argument("relaxed z outside [0, 1]");
      } else if (zi != 0.0 && zi != 1.0) {
        throw std::invalid_argument("binary z must be 0 or 1");
      }
    }
  }
}

ControlSchedule ControlSchedule::constant(const CascadeTopology& topology, double t0,
                                          double interval, int n_intervals, double opening,
                                          double z_value) {
  ControlSchedule s;
  s.t_grid.resize(n_intervals + 1);
  for (int k = 0; k <= n_intervals; ++k) s.t_grid[k] = t0 + k * interval;
  s.v.assign(topology.num_dams(), std::vector<double>(n_intervals, opening));
  s.z.assign(topology.num_dams(), std::vector<double>(n_intervals, z_value));
  return s;
}

ScenarioTrajectory simulate_schedule(const CascadeTopology& topology, const CascadeState& x0,
                                     const ControlSchedule& schedule, const SamplePath& path,
                                     const SolverParams& params, const SimOptions& sim) {
  ScenarioTrajectory out;
  const int nt = schedule.intervals();
  const std::size_t nd = topology.num_dams();
  out.snapshots.reserve(nt + 1);
  out.snapshots.push_back(x0);
  out.energy_mwh.assign(nd, std::vector<double>(nt, 0.0));
  out.revenue.assign(nt, 0.0);

  CascadeState state = x0;
  int substeps = 0;
  try {
    for (int k = 0; k < nt; ++k) {
      const double t_end = schedule.t_grid[k + 1];
      std::vector<DamControl> controls(nd);
      for (std::size_t d = 0; d < nd; ++d)
        controls[d] = DamControl{schedule.v[d][k], schedule.z[d][k]};

      double t = schedule.t_grid[k];
      while (t < t_end - 1e-9) {
        double dt;
        if (sim.solver == SolverChoice::explicit_fv) {
          dt = std::min(cfl_dt(state, topology, params), t_end - t);
        } else {
          dt = std::min(sim.dt_semi_implicit, t_end - t);
        }
        CascadeStepInfo info;
        if (sim.solver == SolverChoice::explicit_fv) {
          advance_cascade(topology, state, controls, path.inflow_at(t), dt, params, &info);
        } else {
          step_semi_implicit(topology, state, controls, path.inflow_at(t), dt, params, &info);
        }
        for (std::size_t d = 0; d < nd; ++d)
          out.energy_mwh[d][k] += info.power_mw[d] * dt / 3600.0;
        t += dt;
        if (++substeps > sim.max_substeps)
          throw NonconvergenceError("substep budget exhausted", 0.0);
      }
      if (!state_finite(state)) throw DefectError("nonfinite state");

      const double price = path.price_at(schedule.t_grid[k]);
      for (std::size_t d = 0; d < nd; ++d) out.revenue[k] += price * out.energy_mwh[d][k];
      out.snapshots.push_back(state);
    }
  } catch (const std::exception&) {
    out.feasible = 0;
    while (out.snapshots.size() < static_cast<std::size_t>(nt) + 1)
      out.snapshots.push_back(state);
  }
  return out;
}

TrajectoryBundle simulate_bundle(const CascadeTopology& topology, const CascadeState& x0,
                                 const ControlSchedule& schedule, const ScenarioFan& fan,
                                 const SolverParams& params, const SimOptions& sim) {
  TrajectoryBundle bundle;
  bundle.weights = fan.weights;
  bundle.scenarios.reserve(fan.size());
  for (const SamplePath& path : fan.scenarios)
    bundle.scenarios.push_back(simulate_schedule(topology, x0, schedule, path, params, sim));
  return bundle;
}

namespace {

/// Least constraint margin over cells of one snapshot, against the shrunk
/// bounds. Dry cells violate h_min by construction.
double snapshot_margin(const CascadeState& states, const ObjectiveParams& p,
                       const CascadeTopology& topology, int* reach_out, int* cell_out) {
  double m = kInf;
  for (std::size_t r = 0; r < states.size(); ++r) {
    const double w = topology.reaches[r].channel_width;
    const ReachState& s = states[r];
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double h = s.area[i] / w;
      const double u = s.area[i] > kDryTol ? std::abs(s.discharge[i] / s.area[i]) : 0.0;
      const double margin =
          std::min({h - (p.h_min + p.margin), (p.h_max - p.margin) - h, p.velocity_bound - u});
      if (margin < m) {
        m = margin;
        if (reach_out) *reach_out = static_cast<int>(r);
        if (cell_out) *cell_out = static_cast<int>(i);
      }
    }
  }
  return m;
}

double total_variation(const std::vector<double>& row) {
  double acc = 0.0;
  for (std::size_t k = 1; k < row.size(); ++k) acc += std::abs(row[k] - row[k - 1]);
  return acc;
}

}  // namespace

double objective_eval(const TrajectoryBundle& bundle, const ControlSchedule& schedule,
                      const ObjectiveParams& params, const CascadeTopology& topology,
                      ObjectiveBreakdown* breakdown) {
  ObjectiveBreakdown local;
  ObjectiveBreakdown& b = breakdown ? *breakdown : local;
  b = ObjectiveBreakdown{};
  b.min_margin = kInf;

  double op_cost = 0.0;
  for (int d = 0; d < schedule.dams(); ++d) {
    op_cost += params.c_v * total_variation(schedule.v[d]);
    op_cost += params.c_z * total_variation(schedule.z[d]);
  }
  b.operation_cost = op_cost;

  double revenue = 0.0;
  double barrier = 0.0;
  for (std::size_t s = 0; s < bundle.scenarios.size(); ++s) {
    const ScenarioTrajectory& traj = bundle.scenarios[s];
    const double w = bundle.weights[s];
    if (!traj.feasible) {
      b.finite = false;
      b.scenario = static_cast<int>(s);
      return kInf;
    }
    for (double rev : traj.revenue) revenue += w * rev;
    for (std::size_t k = 1; k < traj.snapshots.size(); ++k) {
      int reach = -1, cell = -1;
      const double m = snapshot_margin(traj.snapshots[k], params, topology, &reach, &cell);
      b.min_margin = std::min(b.min_margin, m);
      if (m <= 0.0) {
        b.finite = false;
        b.scenario = static_cast<int>(s);
        b.interval = static_cast<int>(k) - 1;
        b.reach = reach;
        b.cell = cell;
        return kInf;
      }
      barrier -= w * params.barrier_weight * std::log(m);
    }
  }
  b.revenue = revenue;
  b.barrier = barrier;
  return -revenue + op_cost + barrier;
}

double infeasibility_phi(const ResidualSet& r) {
  return norm2(r.pde) + norm2(r.coupling) + norm2(r.boundary) + neg_part_norm2(r.state_bound);
}

ResidualSet bundle_residuals(const TrajectoryBundle& bundle, const ObjectiveParams& params,
                             const CascadeTopology& topology) {
  ResidualSet rs;
  for (const ScenarioTrajectory& traj : bundle.scenarios) {
    for (std::size_t k = 1; k < traj.snapshots.size(); ++k) {
      const CascadeState& states = traj.snapshots[k];
      for (std::size_t r = 0; r < states.size(); ++r) {
        const double w = topology.reaches[r].channel_width;
        for (std::size_t i = 0; i < states[r].size(); ++i) {
          const double h = states[r].area[i] / w;
          const double u =
              states[r].area[i] > kDryTol ? std::abs(states[r].discharge[i] / states[r].area[i])
                                          : 0.0;
          rs.state_bound.push_back(h - params.h_min);
          rs.state_bound.push_back(params.h_max - h);
          rs.state_bound.push_back(params.velocity_bound - u);
        }
      }
    }
  }
  return rs;
}

ScheduleLayout ScheduleLayout::all_v_only(const ControlSchedule& s) {
  ScheduleLayout l;
  l.free_z.assign(s.dams(), std::vector<std::uint8_t>(s.intervals(), 0));
  l.n_v = s.dams() * s.intervals();
  l.n_z = 0;
  return l;
}

ScheduleLayout ScheduleLayout::with_free_z(const ControlSchedule& s,
                                           const std::vector<std::vector<std::uint8_t>>& free_z) {
  ScheduleLayout l;
  l.free_z = free_z;
  l.n_v = s.dams() * s.intervals();
  l.n_z = 0;
  for (const auto& row : free_z)
    for (std::uint8_t f : row) l.n_z += f ? 1 : 0;
  return l;
}

ScheduleLayout ScheduleLayout::z_only(const ControlSchedule& s) {
  ScheduleLayout l;
  l.free_z.assign(s.dams(), std::vector<std::uint8_t>(s.intervals(), 1));
  l.include_v = false;
  l.n_v = 0;
  l.n_z = s.dams() * s.intervals();
  return l;
}

std::vector<double> ScheduleLayout::pack(const ControlSchedule& s) const {
  std::vector<double> x;
  x.reserve(dim());
  if (include_v)
    for (const auto& row : s.v) x.insert(x.end(), row.begin(), row.end());
  for (std::size_t d = 0; d < free_z.size(); ++d)
    for (std::size_t k = 0; k < free_z[d].size(); ++k)
      if (free_z[d][k]) x.push_back(s.z[d][k]);
  return x;
}

void ScheduleLayout::unpack(const std::vector<double>& x, ControlSchedule& s) const {
  std::size_t idx = 0;
  if (include_v)
    for (auto& row : s.v)
      for (double& vi : row) vi = x[idx++];
  for (std::size_t d = 0; d < free_z.size(); ++d)
    for (std::size_t k = 0; k < free_z[d].size(); ++k)
      if (free_z[d][k]) s.z[d][k] = x[idx++];
}

void ScheduleLayout::bounds(const CascadeTopology& topology, const ControlSchedule& s,
                            std::vector<double>& lo, std::vector<double>& hi) const {
  lo.clear();
  hi.clear();
  if (include_v)
    for (int d = 0; d < s.dams(); ++d)
      for (int k = 0; k < s.intervals(); ++k) {
        lo.push_back(0.0);
        hi.push_back(topology.dams[d].max_opening);
      }
  for (std::size_t d = 0; d < free_z.size(); ++d)
    for (std::size_t k = 0; k < free_z[d].size(); ++k)
      if (free_z[d][k]) {
        lo.push_back(0.0);
        hi.push_back(1.0);
      }
}

std::vector<double> sensitivities(const CascadeTopology& topology, const CascadeState& x0,
                                  const ControlSchedule& schedule, const ScheduleLayout& layout,
                                  const ScenarioFan& fan, const ObjectiveParams& params,
                                  const SolverParams& solver, const SimOptions& sim, FdMode mode,
                                  SensitivityReport* report) {
  ControlSchedule work = schedule;
  const std::vector<double> x = layout.pack(schedule);

  const auto eval = [&](const std::vector<double>& xv) {
    layout.unpack(xv, work);
    const TrajectoryBundle bundle = simulate_bundle(topology, x0, work, fan, solver, sim);
    return objective_eval(bundle, work, params, topology);
  };

  const double j0 = mode == FdMode::forward_fd ? eval(x) : 0.0;
  std::vector<double> grad(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = 1e-5 * (1.0 + std::abs(x[i]));
    std::vector<double> xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    if (mode == FdMode::forward_fd) {
      double jp = eval(xp);
      if (!std::isfinite(jp)) {
        jp = eval(xm);  // one-sided from the other side
        grad[i] = (j0 - jp) / h;
        if (report) report->one_sided.push_back(static_cast<int>(i));
      } else {
        grad[i] = (jp - j0) / h;
      }
    } else {
      const double jp = eval(xp);
      const double jm = eval(xm);
      if (std::isfinite(jp) && std::isfinite(jm)) {
        grad[i] = (jp - jm) / (2.0 * h);
      } else {
        const double jc = eval(x);
        grad[i] = std::isfinite(jp) ? (jp - jc) / h : (jc - jm) / h;
        if (report) report->one_sided.push_back(static_cast<int>(i));
      }
    }
  }
  return grad;
}

SwitchDecomposition decompose_switches(const ControlSchedule& schedule) {
  SwitchDecomposition d;
  const int nd = schedule.dams();
  d.counts.assign(nd, 0);
  d.times.resize(nd);
  d.initial.resize(nd);
  for (int dam = 0; dam < nd; ++dam) {
    d.initial[dam] = schedule.z[dam].empty() ? 0.0 : schedule.z[dam][0];
    for (int k = 1; k < schedule.intervals(); ++k) {
      if (schedule.z[dam][k] != schedule.z[dam][k - 1]) {
        ++d.counts[dam];
        d.times[dam].push_back(schedule.t_grid[k]);
      }
    }
  }
  return d;
}

void recompose_switches(const SwitchDecomposition& d, const std::vector<double>& t_grid,
                        ControlSchedule& schedule) {
  schedule.t_grid = t_grid;
  const int nt = static_cast<int>(t_grid.size()) - 1;
  const int nd = static_cast<int>(d.counts.size());
  schedule.z.assign(nd, std::vector<double>(nt, 0.0));
  if (schedule.v.size() != static_cast<std::size_t>(nd) ||
      (nd > 0 && schedule.v[0].size() != static_cast<std::size_t>(nt)))
    schedule.v.assign(nd, std::vector<double>(nt, 0.0));
  for (int dam = 0; dam < nd; ++dam) {
    double level = d.initial[dam];
    std::size_t next = 0;
    for (int k = 0; k < nt; ++k) {
      while (next < d.times[dam].size() && d.times[dam][next] <= t_grid[k] + 1e-9) {
        level = level == 0.0 ? 1.0 : 0.0;
        ++next;
      }
      schedule.z[dam][k] = level;
    }
  }
}

double OcpInstance::evaluate(const ControlSchedule& schedule, ObjectiveBreakdown* breakdown) const {
  const TrajectoryBundle bundle = simulate_bundle(topology, initial_state, schedule, fan, solver, sim);
  return objective_eval(bundle, schedule, objective, topology, breakdown);
}

}  // namespace cascade
