#include "cascade/explicit_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cascade {

namespace {

double pressure(double area, double gravity, double width) {
  return 0.5 * gravity * area * area / width;
}

struct CellPrim {
  double area;
  double discharge;
  double velocity;
  double celerity;
  bool wet;
};

CellPrim primitives(const FaceState& s, double gravity, double width, double dry_tol) {
  CellPrim p{};
  if (s.area > dry_tol) {
    p.area = s.area;
    p.discharge = s.discharge;
    p.velocity = s.discharge / s.area;
    p.celerity = std::sqrt(gravity * s.area / width);
    p.wet = true;
  }
  return p;
}

}  // namespace

std::optional<Flux> physical_flux(double area, double discharge, double gravity, double width,
                                  double dry_tol) {
  if (area <= dry_tol) return std::nullopt;
  return Flux{discharge, discharge * discharge / area + pressure(area, gravity, width)};
}

Flux hll_interface_flux(const FaceState& left, const FaceState& right, double gravity,
                        double width, double dry_tol) {
  const CellPrim l = primitives(left, gravity, width, dry_tol);
  const CellPrim r = primitives(right, gravity, width, dry_tol);
  if (!l.wet && !r.wet) return Flux{0.0, 0.0};

  // Consistency fast path keeps lake-at-rest updates bit-exactly zero.
  if (l.wet && r.wet && l.area == r.area && l.discharge == r.discharge)
    return *physical_flux(l.area, l.discharge, gravity, width, dry_tol);

  const double sl = std::min(l.velocity - l.celerity, r.velocity - r.celerity);
  const double sr = std::max(l.velocity + l.celerity, r.velocity + r.celerity);

  const Flux fl = l.wet ? *physical_flux(l.area, l.discharge, gravity, width, dry_tol)
                        : Flux{0.0, 0.0};
  const Flux fr = r.wet ? *physical_flux(r.area, r.discharge, gravity, width, dry_tol)
                        : Flux{0.0, 0.0};

  if (sl >= 0.0) return fl;
  if (sr <= 0.0) return fr;
  const double inv = 1.0 / (sr - sl);
  return Flux{(sr * fl.mass - sl * fr.mass + sl * sr * (r.area - l.area)) * inv,
              (sr * fl.momentum - sl * fr.momentum + sl * sr * (r.discharge - l.discharge)) * inv};
}

ReconstructedFace hydrostatic_reconstruct(const FaceState& left, const FaceState& right,
                                          double zb_left, double zb_right, double width,
                                          double dry_tol) {
  ReconstructedFace f;
  f.face_bed = std::max(zb_left, zb_right);

  const double hl = left.area / width;
  const double hr = right.area / width;
  const double hl_star = std::max(0.0, hl + zb_left - f.face_bed);
  const double hr_star = std::max(0.0, hr + zb_right - f.face_bed);

  const double ul = left.area > dry_tol ? left.discharge / left.area : 0.0;
  const double ur = right.area > dry_tol ? right.discharge / right.area : 0.0;

  f.left = FaceState{hl_star * width, ul * hl_star * width};
  f.right = FaceState{hr_star * width, ur * hr_star * width};
  return f;
}

void friction_semi_implicit(ReachState& state, const Reach& reach, double dt, double gravity,
                            double dry_tol) {
  const double n2 = reach.manning_n * reach.manning_n;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state.area[i] <= dry_tol) {
      state.discharge[i] = 0.0;
      continue;
    }
    const double a73 = std::pow(state.area[i], 7.0 / 3.0);
    state.discharge[i] /= 1.0 + dt * gravity * n2 * std::abs(state.discharge[i]) / a73;
  }
}

double gate_discharge(double h_up, double h_down, double opening, double z,
                      const DamParams& params, double gravity) {
  if (opening < 0.0 || opening > params.max_opening)
    throw std::invalid_argument("gate opening outside [0, max_opening]");
  const double head = std::max(h_up - h_down, 0.0);
  return z * params.discharge_coefficient * params.gate_width * opening *
         std::sqrt(2.0 * gravity * head);
}

double power_output(double q_gate, double head, const DamParams& params, double gravity) {
  return kWaterDensity * gravity * params.turbine_efficiency * q_gate * head / 1e6;
}

double cfl_dt(const ReachState& state, const Reach& reach, const SolverParams& params) {
  double dt = std::numeric_limits<double>::infinity();
  const double w = reach.channel_width;
  for (std::size_t i = 0; i < state.size(); ++i) {
    const double a = state.area[i];
    if (a <= params.dry_tol) continue;
    const double speed = std::abs(state.discharge[i] / a) + std::sqrt(params.gravity * a / w);
    dt = std::min(dt, reach.bathymetry.dx / speed);
  }
  if (!std::isfinite(dt)) return params.dt_max;
  return std::min(params.cfl * dt, params.dt_max);
}

double cfl_dt(const CascadeState& states, const CascadeTopology& topology,
              const SolverParams& params) {
  double dt = params.dt_max;
  for (std::size_t r = 0; r < states.size(); ++r)
    dt = std::min(dt, cfl_dt(states[r], topology.reaches[r], params));
  return dt;
}

namespace {

/// Stage at a reach end, averaged over a short stilling pool (up to 3
/// cells). Pointwise boundary-cell values differ between the two
/// integrators; the pooled stage makes the gate coupling robust to that.
double end_stage(const ReachState& s, const Reach& reach, bool downstream_end) {
  const std::size_t n = s.size();
  const std::size_t k = std::min<std::size_t>(3, n);
  double acc = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t i = downstream_end ? n - 1 - j : j;
    acc += surface_elevation(s.area[i], reach.channel_width, reach.bathymetry.bed_elevation[i]);
  }
  return acc / static_cast<double>(k);
}

/// Water held by the forebay pool feeding a reach-end withdrawal.
double pool_volume(const ReachState& s, const Reach& reach, bool downstream_end) {
  const std::size_t n = s.size();
  const std::size_t k = std::min<std::size_t>(3, n);
  double acc = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t i = downstream_end ? n - 1 - j : j;
    acc += s.area[i] * reach.bathymetry.dx;
  }
  return acc;
}

}  // namespace

void compute_boundary_flows(const CascadeTopology& topology, const CascadeState& states,
                            const std::vector<DamControl>& controls, double dt,
                            const SolverParams& params, CascadeStepInfo& info,
                            bool reach_level_limit) {
  const std::size_t nd = topology.num_dams();
  if (controls.size() != nd) throw std::invalid_argument("one control per dam required");
  info.gate_flow.assign(nd, 0.0);
  info.gate_head.assign(nd, 0.0);
  info.power_mw.assign(nd, 0.0);

  for (std::size_t l = 0; l < nd; ++l) {
    const Reach& up = topology.reaches[l];
    const Reach& down = topology.reaches[l + 1];
    const ReachState& su = states[l];
    const ReachState& sd = states[l + 1];
    const std::size_t iu = su.size() - 1;

    // Pooled surface elevations on the common datum drive the gate.
    const double eta_up = end_stage(su, up, true);
    const double eta_down = end_stage(sd, down, false);
    double q = gate_discharge(eta_up, eta_down, controls[l].opening, controls[l].z,
                              topology.dams[l], params.gravity);
    // Never withdraw more than the donor side holds in one step: the single
    // donor cell for the explicit scheme, the forebay pool the implicit
    // solver can resupply within a step otherwise.
    if (reach_level_limit) {
      q = std::min(q, 0.9 * pool_volume(su, up, true) / dt);
    } else {
      q = std::min(q, 0.9 * su.area[iu] * up.bathymetry.dx / dt);
    }

    const double tail = std::max(eta_down, topology.dams[l].head_reference);
    const double head = std::max(eta_up - tail, 0.0);

    info.gate_flow[l] = q;
    info.gate_head[l] = head;
    info.power_mw[l] = power_output(q, head, topology.dams[l], params.gravity);
  }

  const Reach& last = topology.reaches.back();
  const ReachState& sl = states.back();
  const std::size_t il = sl.size() - 1;
  const double eta = end_stage(sl, last, true);
  const double excess = std::max(eta - topology.outfall.crest_elevation, 0.0);
  double q_out = topology.outfall.coefficient * last.channel_width *
                 std::sqrt(2.0 * params.gravity) * excess * std::sqrt(excess);
  if (reach_level_limit) {
    q_out = std::min(q_out, 0.9 * pool_volume(sl, last, true) / dt);
  } else {
    q_out = std::min(q_out, 0.9 * sl.area[il] * last.bathymetry.dx / dt);
  }
  info.outflow = q_out;
}

namespace {

/// One explicit FV step of a single reach with mirror walls; boundary mass
/// exchange (inflow/gates/outfall) is applied by the caller afterwards.
void step_reach(const Reach& reach, ReachState& state, double dt, const SolverParams& params) {
  const std::size_t n = state.size();
  const double w = reach.channel_width;
  const double g = params.gravity;
  const double lambda = dt / reach.bathymetry.dx;
  const auto& zb = reach.bathymetry.bed_elevation;

  std::vector<double> new_area(n), new_q(n);

  // Fluxes at the n+1 interfaces; index i is the interface left of cell i.
  // "minus" applies to the left cell, "plus" to the right cell (they differ
  // by the hydrostatic pressure correction).
  std::vector<Flux> minus(n + 1), plus(n + 1);

  auto corrected = [&](const FaceState& lc, const FaceState& rc, double zl, double zr) {
    const ReconstructedFace f = hydrostatic_reconstruct(lc, rc, zl, zr, w, params.dry_tol);
    const Flux base = hll_interface_flux(f.left, f.right, g, w, params.dry_tol);
    Flux fm = base, fp = base;
    fm.momentum += pressure(lc.area, g, w) - pressure(f.left.area, g, w);
    fp.momentum += pressure(rc.area, g, w) - pressure(f.right.area, g, w);
    return std::pair<Flux, Flux>(fm, fp);
  };

  for (std::size_t i = 0; i + 1 < n; ++i) {
    const FaceState lc{state.area[i], state.discharge[i]};
    const FaceState rc{state.area[i + 1], state.discharge[i + 1]};
    auto [fm, fp] = corrected(lc, rc, zb[i], zb[i + 1]);
    minus[i + 1] = fm;
    plus[i + 1] = fp;
  }
  {  // left wall: mirror ghost cell
    const FaceState ghost{state.area[0], -state.discharge[0]};
    const FaceState rc{state.area[0], state.discharge[0]};
    auto [fm, fp] = corrected(ghost, rc, zb[0], zb[0]);
    plus[0] = fp;
    (void)fm;
  }
  {  // right wall
    const FaceState lc{state.area[n - 1], state.discharge[n - 1]};
    const FaceState ghost{state.area[n - 1], -state.discharge[n - 1]};
    auto [fm, fp] = corrected(lc, ghost, zb[n - 1], zb[n - 1]);
    minus[n] = fm;
    (void)fp;
  }

  for (std::size_t i = 0; i < n; ++i) {
    new_area[i] = state.area[i] - lambda * (minus[i + 1].mass - plus[i].mass);
    new_q[i] = state.discharge[i] - lambda * (minus[i + 1].momentum - plus[i].momentum);
  }

  state.area = std::move(new_area);
  state.discharge = std::move(new_q);
}

void finalize_cells(ReachState& state, const Reach& reach, const SolverParams& params) {
  const double clamp_tol = 1e-13 * std::max(1.0, reach.channel_width);
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state.area[i] < 0.0) {
      if (state.area[i] < -clamp_tol)
        throw DefectError("negative wetted area after explicit step");
      state.area[i] = 0.0;
    }
    if (state.area[i] <= params.dry_tol) state.discharge[i] = 0.0;
  }
}

}  // namespace

void advance_cascade(const CascadeTopology& topology, CascadeState& states,
                     const std::vector<DamControl>& controls, double inflow, double dt,
                     const SolverParams& params, CascadeStepInfo* info) {
  CascadeStepInfo local;
  CascadeStepInfo& bk = info ? *info : local;
  compute_boundary_flows(topology, states, controls, dt, params, bk);
  bk.inflow = inflow;

  for (std::size_t r = 0; r < states.size(); ++r)
    step_reach(topology.reaches[r], states[r], dt, params);

  // Boundary mass exchange: inflow into the head cell, gate transfer between
  // adjacent reaches, outfall from the tail cell.
  const double dx0 = topology.reaches.front().bathymetry.dx;
  states.front().area.front() += dt * inflow / dx0;
  for (std::size_t l = 0; l < topology.num_dams(); ++l) {
    const double q = bk.gate_flow[l];
    states[l].area.back() -= dt * q / topology.reaches[l].bathymetry.dx;
    states[l + 1].area.front() += dt * q / topology.reaches[l + 1].bathymetry.dx;
  }
  states.back().area.back() -= dt * bk.outflow / topology.reaches.back().bathymetry.dx;

  for (std::size_t r = 0; r < states.size(); ++r) {
    friction_semi_implicit(states[r], topology.reaches[r], dt, params.gravity, params.dry_tol);
    finalize_cells(states[r], topology.reaches[r], params);
    states[r].time += dt;
  }
}

}  // namespace cascade
