#pragma once

#include <optional>
#include <vector>

#include "cascade/types.hpp"

namespace cascade {

struct SolverParams {
  double gravity = kGravity;
  double dry_tol = kDryTol;  // [m^2]
  double cfl = 0.45;
  double dt_max = 600.0;  // returned when a reach is entirely dry [s]
};

struct Flux {
  double mass = 0.0;      // [m^3/s]
  double momentum = 0.0;  // [m^4/s^2]
};

/// Cell state seen by an interface.
struct FaceState {
  double area = 0.0;
  double discharge = 0.0;
};

/// Saint-Venant flux (Q, Q^2/A + g A^2 / (2 width)). The momentum term is
/// the cross-section hydrostatic pressure of a rectangular channel; width
/// defaults to 1 so the unit-width form matches the balance law as written.
/// Returns nullopt for dry cells (A <= dry_tol); the caller substitutes
/// zero flux.
std::optional<Flux> physical_flux(double area, double discharge, double gravity,
                                  double width = 1.0, double dry_tol = kDryTol);

/// HLL interface flux with wave speeds s_L = min(u_L - c_L, u_R - c_R),
/// s_R = max(u_L + c_L, u_R + c_R), c = sqrt(g A / width). Dry sides are
/// substituted by the zero state. Equal wet states return their physical
/// flux bit-exactly.
Flux hll_interface_flux(const FaceState& left, const FaceState& right, double gravity,
                        double width = 1.0, double dry_tol = kDryTol);

struct ReconstructedFace {
  FaceState left;
  FaceState right;
  double face_bed = 0.0;  // max(z_b_L, z_b_R)
};

/// Hydrostatic interface reconstruction: depths are lowered to
/// h* = max(0, h + z_b - max(z_b_L, z_b_R)) while velocities are kept, which
/// makes the bed-slope source discretization well balanced.
ReconstructedFace hydrostatic_reconstruct(const FaceState& left, const FaceState& right,
                                          double zb_left, double zb_right, double width,
                                          double dry_tol = kDryTol);

/// Pointwise semi-implicit Manning friction update
///   Q <- Q / (1 + dt g n^2 |Q| / A^{7/3}),
/// the closed-form solution of the linearized implicit equation. The momentum
/// sink is -g A S_f with S_f = n^2 Q|Q| / A^{10/3} taken on the cross-section
/// area itself (wide-channel hydraulic radius absorbed into n). Never grows
/// |Q| and never flips its sign; dry cells are set to Q = 0.
void friction_semi_implicit(ReachState& state, const Reach& reach, double dt,
                            double gravity = kGravity, double dry_tol = kDryTol);

/// Submerged-orifice gate law Q = z Cd w v sqrt(2 g max(h_up - h_down, 0)).
/// z may be a relaxed value in [0,1]; it scales the discharge linearly.
/// Throws std::invalid_argument when v is outside [0, max_opening].
double gate_discharge(double h_up, double h_down, double opening, double z,
                      const DamParams& params, double gravity = kGravity);

/// Turbine power P = rho g eta_t Q head / 1e6 [MW].
double power_output(double q_gate, double head, const DamParams& params,
                    double gravity = kGravity);

/// CFL-limited step size over the wet cells of one reach; dt_max when the
/// whole reach is dry.
double cfl_dt(const ReachState& state, const Reach& reach, const SolverParams& params);
double cfl_dt(const CascadeState& states, const CascadeTopology& topology,
              const SolverParams& params);

/// Per-dam control applied over one step. z is {0,1} for binary schedules
/// and [0,1] when relaxed.
struct DamControl {
  double opening = 0.0;
  double z = 0.0;
};

/// Per-step bookkeeping of the boundary exchange.
struct CascadeStepInfo {
  std::vector<double> gate_flow;   // [m^3/s] per dam
  std::vector<double> gate_head;   // effective head per dam [m]
  std::vector<double> power_mw;    // per dam
  double inflow = 0.0;             // [m^3/s]
  double outflow = 0.0;            // outfall discharge [m^3/s]
};

/// One explicit well-balanced finite-volume step of the whole cascade:
/// hydrostatic reconstruction + HLL fluxes + bed-slope source, mirror-wall
/// reach ends, explicit gate transfer between reaches, semi-implicit
/// friction. Requires dt <= cfl_dt of every reach. Throws DefectError if a
/// depth would become negative.
void advance_cascade(const CascadeTopology& topology, CascadeState& states,
                     const std::vector<DamControl>& controls, double inflow, double dt,
                     const SolverParams& params, CascadeStepInfo* info = nullptr);

/// Gate flows for the current states (shared by both integrators). The
/// availability limiter protects the donor side: per donor cell
/// (q <= 0.9 A dx / dt) for the explicit integrator, per donor reach
/// (q <= 0.45 V / dt) when the implicit solver can resupply the forebay
/// within the step.
void compute_boundary_flows(const CascadeTopology& topology, const CascadeState& states,
                            const std::vector<DamControl>& controls, double dt,
                            const SolverParams& params, CascadeStepInfo& info,
                            bool reach_level_limit = false);

}  // namespace cascade
