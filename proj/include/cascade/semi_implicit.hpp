#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "cascade/explicit_solver.hpp"
#include "cascade/types.hpp"

namespace cascade {

/// Wet/dry indicator per cell: the active set of the piecewise-linear step.
struct RegimeVector {
  std::vector<std::uint8_t> wet;

  std::size_t size() const { return wet.size(); }
  bool operator==(const RegimeVector& o) const { return wet == o.wet; }
};

/// Elementwise positivity operator H = max(0, eta + z_b). The solver calls
/// it with zb_offset = -bed_elevation so H is the water depth.
std::vector<double> positivity_clip(const std::vector<double>& eta,
                                    const std::vector<double>& zb_offset);

/// One reach's semi-implicit step cast as the piecewise-linear system
/// A(sigma) x = b(sigma) in the stacked unknowns x = (eta_0..n-1, Q interior
/// faces 0..n-2). Gravity/pressure coupling is implicit, advection and face
/// coefficients are frozen at time n, friction is linearized semi-implicitly,
/// and sigma enters only through the positivity operator in the continuity
/// rows. Boundary-face discharges (inflow, gates, outfall) are prescribed
/// explicitly and sit in the right-hand side.
///
/// Rows are nondimensionalized: continuity in depth units (divided by dx
/// times width), momentum in discharge units, so the residual tolerance is
/// meaningful independently of cell size and stage.
struct PLSystem {
  int cells = 0;
  double dx = 1.0;
  double width = 1.0;
  double dt = 1.0;
  double gravity = kGravity;

  std::vector<double> bed;         // z_b per cell
  std::vector<double> face_area;   // A^n at interior faces (0 when dry)
  std::vector<double> face_coeff;  // 1 + dt g n^2 |Q^n| / A^{7/3} per face
  std::vector<double> face_rhs;    // advected face discharge per face
  std::vector<double> cell_rhs;    // (V_i(eta^n) + dt * prescribed flows) / (dx w)

  int unknowns() const { return 2 * cells - 1; }
  bool face_wet(int j) const { return face_area[j] > 0.0; }

  /// Stacked residual A(sigma) x - b(sigma).
  Eigen::VectorXd residual(const RegimeVector& sigma, const Eigen::VectorXd& x) const;
  Eigen::VectorXd rhs(const RegimeVector& sigma) const;
};

PLSystem assemble_semi_implicit(const ReachState& state, const Reach& reach, double dt,
                                double inflow_face, double outflow_face,
                                const SolverParams& params);

struct NestedNewtonResult {
  Eigen::VectorXd x;  // stacked (eta, Q)
  RegimeVector sigma;
  int iterations = 0;
  double residual_norm = 0.0;
};

/// Outer active-set (nested Newton) iteration: sigma is refreshed from the
/// current surface, the frozen-sigma linear system is solved by direct
/// tridiagonal factorization of the eta-Schur complement, and the loop ends
/// when sigma is self-consistent and the stacked residual is below tol.
/// Throws NonconvergenceError after 2 * cells iterations.
NestedNewtonResult nested_newton_solve(const PLSystem& system, const Eigen::VectorXd& x0,
                                       double tol = 1e-10);

struct SemiImplicitOptions {
  double newton_tol = 1e-10;
};

/// One semi-implicit step of the whole cascade. No CFL restriction; mass is
/// conserved to solver tolerance and depths are nonnegative by construction.
void step_semi_implicit(const CascadeTopology& topology, CascadeState& states,
                        const std::vector<DamControl>& controls, double inflow, double dt,
                        const SolverParams& params, CascadeStepInfo* info = nullptr,
                        const SemiImplicitOptions& options = {});

/// Initial stacked iterate from a reach state (eta from depths, face Q
/// averaged from cell discharges).
Eigen::VectorXd stacked_initial_guess(const ReachState& state, const Reach& reach);

}  // namespace cascade
