#include "cascade/semi_implicit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cascade {

std::vector<double> positivity_clip(const std::vector<double>& eta,
                                    const std::vector<double>& zb_offset) {
  std::vector<double> h(eta.size());
  for (std::size_t i = 0; i < eta.size(); ++i) h[i] = std::max(0.0, eta[i] + zb_offset[i]);
  return h;
}

namespace {

/// Frozen advected face discharge: upwind interpolation along the
/// characteristic x - u dt (semi-Lagrangian form of the first-order upwind
/// flux; identical to plain upwind for u dt <= dx and stable beyond it).
double advected_face_q(const std::vector<double>& face_q, double q_left_boundary,
                       double q_right_boundary, int j, double u, double dt, double dx) {
  const int nf = static_cast<int>(face_q.size());
  double pos = static_cast<double>(j) - u * dt / dx;  // in face-index units
  pos = std::clamp(pos, -1.0, static_cast<double>(nf));
  const auto value_at = [&](int idx) {
    if (idx < 0) return q_left_boundary;
    if (idx >= nf) return q_right_boundary;
    return face_q[idx];
  };
  const int lo = static_cast<int>(std::floor(pos));
  const double frac = pos - lo;
  return (1.0 - frac) * value_at(lo) + frac * value_at(lo + 1);
}

}  // namespace

PLSystem assemble_semi_implicit(const ReachState& state, const Reach& reach, double dt,
                                double inflow_face, double outflow_face,
                                const SolverParams& params) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const int n = static_cast<int>(state.size());
  const double w = reach.channel_width;
  const double dx = reach.bathymetry.dx;

  PLSystem sys;
  sys.cells = n;
  sys.dx = dx;
  sys.width = w;
  sys.dt = dt;
  sys.gravity = params.gravity;
  sys.bed = reach.bathymetry.bed_elevation;

  std::vector<double> depth(n);
  for (int i = 0; i < n; ++i) depth[i] = state.area[i] / w;

  const int nf = n - 1;
  sys.face_area.assign(nf, 0.0);
  sys.face_coeff.assign(nf, 1.0);
  sys.face_rhs.assign(nf, 0.0);

  std::vector<double> face_q(nf, 0.0);
  for (int j = 0; j < nf; ++j) {
    const double a = 0.5 * (depth[j] + depth[j + 1]) * w;
    if (a <= params.dry_tol) continue;
    sys.face_area[j] = a;
    face_q[j] = 0.5 * (state.discharge[j] + state.discharge[j + 1]);
  }

  const double n2 = reach.manning_n * reach.manning_n;
  for (int j = 0; j < nf; ++j) {
    if (!sys.face_wet(j)) continue;
    const double a73 = std::pow(sys.face_area[j], 7.0 / 3.0);
    sys.face_coeff[j] = 1.0 + dt * params.gravity * n2 * std::abs(face_q[j]) / a73;
    const double u = face_q[j] / sys.face_area[j];
    sys.face_rhs[j] = advected_face_q(face_q, inflow_face, outflow_face, j, u, dt, dx);
  }

  // Depth-unit continuity right-hand side: V_i / (dx w) plus boundary flows.
  const double lam = dt / (dx * w);
  sys.cell_rhs.assign(n, 0.0);
  for (int i = 0; i < n; ++i) sys.cell_rhs[i] = state.area[i] / w;
  sys.cell_rhs[0] += lam * inflow_face;
  sys.cell_rhs[n - 1] -= lam * outflow_face;
  return sys;
}

Eigen::VectorXd PLSystem::rhs(const RegimeVector& sigma) const {
  Eigen::VectorXd b(unknowns());
  for (int i = 0; i < cells; ++i) b[i] = cell_rhs[i] + (sigma.wet[i] ? bed[i] : 0.0);
  for (int j = 0; j < cells - 1; ++j) b[cells + j] = face_rhs[j];
  return b;
}

Eigen::VectorXd PLSystem::residual(const RegimeVector& sigma, const Eigen::VectorXd& x) const {
  Eigen::VectorXd r(unknowns());
  const double lam = dt / (dx * width);
  const int nf = cells - 1;
  for (int i = 0; i < cells; ++i) {
    double acc = sigma.wet[i] ? x[i] - bed[i] : 0.0;
    if (i < nf) acc += lam * x[cells + i];     // outgoing right face
    if (i > 0) acc -= lam * x[cells + i - 1];  // incoming left face
    r[i] = acc - cell_rhs[i];
  }
  for (int j = 0; j < nf; ++j) {
    if (face_wet(j)) {
      r[cells + j] = face_coeff[j] * x[cells + j] +
                     dt * gravity * face_area[j] * (x[j + 1] - x[j]) / dx - face_rhs[j];
    } else {
      r[cells + j] = x[cells + j];
    }
  }
  return r;
}

NestedNewtonResult nested_newton_solve(const PLSystem& sys, const Eigen::VectorXd& x0,
                                       double tol) {
  const int n = sys.cells;
  const int nf = n - 1;
  const double lam = sys.dt / (sys.dx * sys.width);

  RegimeVector sigma;
  sigma.wet.resize(n);
  for (int i = 0; i < n; ++i) sigma.wet[i] = x0[i] - sys.bed[i] > 0.0 ? 1 : 0;

  // Face factors do not depend on sigma.
  std::vector<double> beta(nf, 0.0), gamma_r(nf, 0.0);
  for (int j = 0; j < nf; ++j) {
    if (!sys.face_wet(j)) continue;
    beta[j] = sys.dt * sys.gravity * sys.face_area[j] / (sys.dx * sys.face_coeff[j]);
    gamma_r[j] = sys.face_rhs[j] / sys.face_coeff[j];
  }

  Eigen::VectorXd eta = x0.head(n);
  Eigen::VectorXd x(sys.unknowns());
  std::vector<double> lower(n), diag(n), upper(n), rhs(n);
  std::vector<double> piv(n), mult(n), work(n), work2(n);

  // Q as a function of eta through the (exact) momentum elimination.
  const auto face_q_of = [&](const Eigen::VectorXd& e, int j) {
    return sys.face_wet(j) ? gamma_r[j] - beta[j] * (e[j + 1] - e[j]) : 0.0;
  };

  // Continuity residual of the frozen-sigma system, evaluated through the
  // eliminated Q. Adjacent-cell eta differences keep the arithmetic free of
  // the large cancellations the assembled Schur matrix would have.
  const auto schur_residual = [&](const RegimeVector& sig, const Eigen::VectorXd& e,
                                  std::vector<double>& out) {
    for (int i = 0; i < n; ++i) {
      if (!sig.wet[i] && !(i < nf && sys.face_wet(i)) && !(i > 0 && sys.face_wet(i - 1))) {
        out[i] = sys.bed[i] - e[i];  // pinned dry cell
        continue;
      }
      double acc = sys.cell_rhs[i];
      if (sig.wet[i]) acc -= e[i] - sys.bed[i];
      if (i < nf) acc -= lam * face_q_of(e, i);
      if (i > 0) acc += lam * face_q_of(e, i - 1);
      out[i] = acc;
    }
  };

  // Thomas factorization; diagonally dominant, no pivoting needed.
  const auto factor_tridiag = [&]() {
    mult[0] = 0.0;
    piv[0] = diag[0];
    for (int i = 1; i < n; ++i) {
      mult[i] = lower[i] / piv[i - 1];
      piv[i] = diag[i] - mult[i] * upper[i - 1];
    }
  };
  const auto backsolve = [&](const std::vector<double>& in, Eigen::VectorXd& sol) {
    work[0] = in[0];
    for (int i = 1; i < n; ++i) work[i] = in[i] - mult[i] * work[i - 1];
    sol[n - 1] = work[n - 1] / piv[n - 1];
    for (int i = n - 2; i >= 0; --i) sol[i] = (work[i] - upper[i] * sol[i + 1]) / piv[i];
  };

  const int max_outer = 2 * n;
  double last_residual = std::numeric_limits<double>::infinity();
  for (int outer = 1; outer <= max_outer; ++outer) {
    // eta-Schur complement of the stacked system for the frozen sigma:
    // SPD tridiagonal "wet Laplacian" plus the sigma diagonal.
    for (int i = 0; i < n; ++i) {
      double d = sigma.wet[i] ? 1.0 : 0.0;
      double r = sys.cell_rhs[i] + (sigma.wet[i] ? sys.bed[i] : 0.0);
      double lo = 0.0, up = 0.0;
      if (i < nf && sys.face_wet(i)) {
        d += lam * beta[i];
        up = -lam * beta[i];
        r -= lam * gamma_r[i];
      }
      if (i > 0 && sys.face_wet(i - 1)) {
        d += lam * beta[i - 1];
        lo = -lam * beta[i - 1];
        r += lam * gamma_r[i - 1];
      }
      if (d == 0.0) {  // isolated dry cell: pin the surface at the bed
        d = 1.0;
        r = sys.bed[i];
      }
      diag[i] = d;
      lower[i] = lo;
      upper[i] = up;
      rhs[i] = r;
    }

    factor_tridiag();
    backsolve(rhs, eta);

    // Incremental refinement against the stably evaluated residual; repairs
    // the cancellation error of the absolute-elevation solve.
    Eigen::VectorXd corr(n);
    for (int pass = 0; pass < 2; ++pass) {
      schur_residual(sigma, eta, work2);
      backsolve(work2, corr);
      eta += corr;
    }

    RegimeVector next;
    next.wet.resize(n);
    for (int i = 0; i < n; ++i) next.wet[i] = eta[i] - sys.bed[i] > 0.0 ? 1 : 0;

    x.head(n) = eta;
    for (int j = 0; j < nf; ++j) x[n + j] = face_q_of(eta, j);

    if (next == sigma) {
      last_residual = sys.residual(sigma, x).lpNorm<Eigen::Infinity>();
      if (last_residual <= tol) return NestedNewtonResult{x, sigma, outer, last_residual};
    }
    sigma = next;
  }
  throw NonconvergenceError("nested Newton did not terminate", last_residual);
}

Eigen::VectorXd stacked_initial_guess(const ReachState& state, const Reach& reach) {
  const int n = static_cast<int>(state.size());
  Eigen::VectorXd x(2 * n - 1);
  for (int i = 0; i < n; ++i)
    x[i] = reach.bathymetry.bed_elevation[i] + state.area[i] / reach.channel_width;
  for (int j = 0; j + 1 < n; ++j) x[n + j] = 0.5 * (state.discharge[j] + state.discharge[j + 1]);
  return x;
}

void step_semi_implicit(const CascadeTopology& topology, CascadeState& states,
                        const std::vector<DamControl>& controls, double inflow, double dt,
                        const SolverParams& params, CascadeStepInfo* info,
                        const SemiImplicitOptions& options) {
  CascadeStepInfo local;
  CascadeStepInfo& bk = info ? *info : local;
  compute_boundary_flows(topology, states, controls, dt, params, bk, true);
  bk.inflow = inflow;

  const std::size_t nr = states.size();
  for (std::size_t r = 0; r < nr; ++r) {
    const Reach& reach = topology.reaches[r];
    const double q_in = r == 0 ? inflow : bk.gate_flow[r - 1];
    const double q_out = r + 1 < nr ? bk.gate_flow[r] : bk.outflow;

    const PLSystem sys = assemble_semi_implicit(states[r], reach, dt, q_in, q_out, params);
    const Eigen::VectorXd x0 = stacked_initial_guess(states[r], reach);
    const NestedNewtonResult res = nested_newton_solve(sys, x0, options.newton_tol);

    const int n = sys.cells;
    for (int i = 0; i < n; ++i) {
      const double h = std::max(0.0, res.x[i] - sys.bed[i]);
      states[r].area[i] = h * reach.channel_width;
      const double ql = i == 0 ? q_in : res.x[n + i - 1];
      const double qr = i == n - 1 ? q_out : res.x[n + i];
      states[r].discharge[i] = 0.5 * (ql + qr);
      if (states[r].area[i] <= params.dry_tol) states[r].discharge[i] = 0.0;
    }
    states[r].time += dt;
  }
}

}  // namespace cascade
