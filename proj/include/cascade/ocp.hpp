#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cascade/explicit_solver.hpp"
#include "cascade/forecast.hpp"
#include "cascade/semi_implicit.hpp"

namespace cascade {

/// Piecewise-constant controls on a shared interval grid: per-dam gate
/// openings and open/close flags. z entries are binary unless relaxed.
struct ControlSchedule {
  std::vector<double> t_grid;           // N_T + 1 boundaries [s]
  std::vector<std::vector<double>> v;   // [dam][interval], meters
  std::vector<std::vector<double>> z;   // [dam][interval]
  bool relaxed = false;

  int intervals() const { return static_cast<int>(t_grid.size()) - 1; }
  int dams() const { return static_cast<int>(v.size()); }
  void validate(const CascadeTopology& topology) const;

  static ControlSchedule constant(const CascadeTopology& topology, double t0, double interval,
                                  int n_intervals, double opening, double z_value);
};

struct ObjectiveParams {
  double c_v = 0.0;             // cost per unit total variation of v
  double c_z = 0.0;             // cost per switch
  double barrier_weight = 1e-3;  // beta_B
  double h_min = 0.1;           // [m]
  double h_max = 10.0;          // [m]
  double velocity_bound = 5.0;  // [m/s]
  double margin = 0.05;         // robustness shrink delta_S [m]
};

enum class SolverChoice { explicit_fv, semi_implicit };

/// Simulation controls for schedule evaluation.
struct SimOptions {
  SolverChoice solver = SolverChoice::semi_implicit;
  double dt_semi_implicit = 60.0;  // [s]
  int max_substeps = 200000;
};

struct ScenarioTrajectory {
  std::vector<CascadeState> snapshots;  // N_T + 1, at interval boundaries
  int feasible = 1;                     // chi: solver health, not bounds
  std::vector<std::vector<double>> energy_mwh;  // [dam][interval]
  std::vector<double> revenue;                  // per interval
};

struct TrajectoryBundle {
  std::vector<ScenarioTrajectory> scenarios;
  std::vector<double> weights;
};

/// Forward simulation of one schedule against one sample path. chi = 0 iff
/// the solver raised or a state became nonfinite; constraint violations do
/// not affect chi.
ScenarioTrajectory simulate_schedule(const CascadeTopology& topology, const CascadeState& x0,
                                     const ControlSchedule& schedule, const SamplePath& path,
                                     const SolverParams& params, const SimOptions& sim);

TrajectoryBundle simulate_bundle(const CascadeTopology& topology, const CascadeState& x0,
                                 const ControlSchedule& schedule, const ScenarioFan& fan,
                                 const SolverParams& params, const SimOptions& sim);

struct ObjectiveBreakdown {
  double revenue = 0.0;       // scenario-weighted
  double operation_cost = 0.0;
  double barrier = 0.0;
  double min_margin = 0.0;
  bool finite = true;
  // first violation, when not finite
  int scenario = -1;
  int interval = -1;
  int reach = -1;
  int cell = -1;
};

/// J = mean_s sum_t [-revenue + C(v,z)] - beta_B mean_s sum_t log(margin).
/// The margin at a snapshot is the least cellwise distance to the shrunk
/// state bounds (h_min + delta, h_max - delta, velocity bound). Returns +inf
/// with a violation report when any margin is nonpositive or any scenario
/// has chi = 0.
double objective_eval(const TrajectoryBundle& bundle, const ControlSchedule& schedule,
                      const ObjectiveParams& params, const CascadeTopology& topology,
                      ObjectiveBreakdown* breakdown = nullptr);

/// Residual blocks entering the infeasibility measure.
struct ResidualSet {
  std::vector<double> pde;          // e(x): zero in simulation mode
  std::vector<double> coupling;     // internal boundary residuals
  std::vector<double> boundary;     // control-induced boundary residuals
  std::vector<double> state_bound;  // S(u) values; negative parts contribute
};

/// phi = ||e|| + ||coupling|| + ||boundary|| + ||S^-|| (discrete l2 norms).
double infeasibility_phi(const ResidualSet& residuals);

/// State-bound values of a simulated bundle (no robustness margin): for
/// every scenario, snapshot and cell, the three constraint values.
ResidualSet bundle_residuals(const TrajectoryBundle& bundle, const ObjectiveParams& params,
                             const CascadeTopology& topology);

/// Maps between a schedule and the free decision vector (all v entries plus
/// z entries where free_z marks them). Used by the optimizers.
struct ScheduleLayout {
  std::vector<std::vector<std::uint8_t>> free_z;  // [dam][interval]
  bool include_v = true;
  int n_v = 0;
  int n_z = 0;

  static ScheduleLayout all_v_only(const ControlSchedule& s);
  static ScheduleLayout with_free_z(const ControlSchedule& s,
                                    const std::vector<std::vector<std::uint8_t>>& free_z);
  static ScheduleLayout z_only(const ControlSchedule& s);
  int dim() const { return n_v + n_z; }
  std::vector<double> pack(const ControlSchedule& s) const;
  void unpack(const std::vector<double>& x, ControlSchedule& s) const;
  void bounds(const CascadeTopology& topology, const ControlSchedule& s,
              std::vector<double>& lo, std::vector<double>& hi) const;
};

enum class FdMode { forward_fd, central_fd };

struct SensitivityReport {
  std::vector<int> one_sided;  // indices where a probe hit the +inf sentinel
};

/// Finite-difference gradient of J over the free decision entries with
/// common random numbers (the fan is fixed); step 1e-5 (1 + |x|). Falls back
/// to one-sided differences at probes that leave the barrier domain.
std::vector<double> sensitivities(const CascadeTopology& topology, const CascadeState& x0,
                                  const ControlSchedule& schedule, const ScheduleLayout& layout,
                                  const ScenarioFan& fan, const ObjectiveParams& params,
                                  const SolverParams& solver, const SimOptions& sim, FdMode mode,
                                  SensitivityReport* report = nullptr);

struct SwitchDecomposition {
  std::vector<int> counts;                      // per dam
  std::vector<std::vector<double>> times;       // per dam, strictly increasing [s]
  std::vector<double> initial;                  // z on the first interval
};

SwitchDecomposition decompose_switches(const ControlSchedule& schedule);
void recompose_switches(const SwitchDecomposition& d, const std::vector<double>& t_grid,
                        ControlSchedule& schedule);

/// Everything needed to evaluate one optimal-control instance.
struct OcpInstance {
  CascadeTopology topology;
  CascadeState initial_state;
  ScenarioFan fan;
  ObjectiveParams objective;
  SolverParams solver;
  SimOptions sim;

  double evaluate(const ControlSchedule& schedule, ObjectiveBreakdown* breakdown = nullptr) const;
};

}  // namespace cascade
