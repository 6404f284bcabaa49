#include <doctest.h>

#include <cmath>
#include <numeric>

#include "cascade/explicit_solver.hpp"
#include "oracles.hpp"

using namespace cascade;

namespace {

Reach flat_reach(int cells, double dx, double width = 1.0, double zb = 0.0, double n = 0.0) {
  Reach r;
  r.channel_width = width;
  r.manning_n = n > 0.0 ? n : 1e-12;
  r.bathymetry.dx = dx;
  r.bathymetry.cell_centers.resize(cells);
  r.bathymetry.bed_elevation.assign(cells, zb);
  for (int i = 0; i < cells; ++i) r.bathymetry.cell_centers[i] = (i + 0.5) * dx;
  return r;
}

Reach sine_reach(int cells, double dx, double amp, double width = 1.0) {
  Reach r = flat_reach(cells, dx, width);
  for (int i = 0; i < cells; ++i)
    r.bathymetry.bed_elevation[i] =
        amp * (1.0 + std::sin(2.0 * M_PI * r.bathymetry.cell_centers[i] / (cells * dx)));
  return r;
}

CascadeTopology single_reach(const Reach& r) {
  CascadeTopology topo;
  topo.reaches = {r};
  return topo;
}

void run_steps(const CascadeTopology& topo, CascadeState& s, int steps, const SolverParams& p,
               double inflow = 0.0) {
  std::vector<DamControl> ctl(topo.num_dams(), DamControl{0.0, 0.0});
  for (int k = 0; k < steps; ++k) {
    const double dt = cfl_dt(s, topo, p);
    advance_cascade(topo, s, ctl, inflow, dt, p);
  }
}

}  // namespace

TEST_SUITE("hydro") {

TEST_CASE("physical flux matches the balance law") {
  auto f = physical_flux(1.0, 0.0, 9.81);
  REQUIRE(f.has_value());
  CHECK(f->mass == doctest::Approx(0.0));
  CHECK(f->momentum == doctest::Approx(4.905));

  f = physical_flux(2.0, 3.0, 9.81);
  REQUIRE(f.has_value());
  CHECK(f->mass == doctest::Approx(3.0));
  CHECK(f->momentum == doctest::Approx(24.12));

  CHECK_FALSE(physical_flux(kDryTol / 2, 0.0, 9.81).has_value());
}

TEST_CASE("hll flux is consistent and handles dry sides") {
  const FaceState still{1.0, 0.0};
  const Flux f = hll_interface_flux(still, still, 9.81);
  CHECK(f.mass == 0.0);
  CHECK(f.momentum == doctest::Approx(4.905));

  const Flux dry = hll_interface_flux(FaceState{0.0, 0.0}, FaceState{0.0, 0.0}, 9.81);
  CHECK(dry.mass == 0.0);
  CHECK(dry.momentum == 0.0);
}

TEST_CASE("hydrostatic reconstruction") {
  SUBCASE("flat bed leaves states unchanged") {
    const auto f = hydrostatic_reconstruct(FaceState{2.0, 1.0}, FaceState{1.0, -0.5}, 3.0, 3.0, 1.0);
    CHECK(f.left.area == doctest::Approx(2.0));
    CHECK(f.left.discharge == doctest::Approx(1.0));
    CHECK(f.right.area == doctest::Approx(1.0));
    CHECK(f.right.discharge == doctest::Approx(-0.5));
  }
  SUBCASE("dry cell behind a higher bed step stays dry") {
    const auto f = hydrostatic_reconstruct(FaceState{1.0, 0.3}, FaceState{0.0, 0.0}, 0.0, 2.0, 1.0);
    CHECK(f.right.area == 0.0);
    CHECK(f.right.discharge == 0.0);
  }
}

TEST_CASE("lake at rest over a bed step is a per-step fixed point") {
  // eta = 5 with bed levels 1 and 2 across the jump.
  Reach r = flat_reach(16, 10.0);
  for (int i = 8; i < 16; ++i) r.bathymetry.bed_elevation[i] = 2.0;
  for (int i = 0; i < 8; ++i) r.bathymetry.bed_elevation[i] = 1.0;
  CascadeTopology topo = single_reach(r);
  CascadeState s = lake_at_rest(topo, 5.0);
  const CascadeState before = s;
  SolverParams p;
  run_steps(topo, s, 1, p);
  for (std::size_t i = 0; i < s[0].size(); ++i) {
    CHECK(std::abs(s[0].area[i] - before[0].area[i]) <= 1e-12);
    CHECK(std::abs(s[0].discharge[i]) <= 1e-12);
  }
}

TEST_CASE("well-balancing over sinusoidal bathymetry, 1000 steps") {
  CascadeTopology topo = single_reach(sine_reach(200, 5.0, 1.5));
  CascadeState s = lake_at_rest(topo, 4.0);
  SolverParams p;
  run_steps(topo, s, 1000, p);
  double max_q = 0.0;
  for (double q : s[0].discharge) max_q = std::max(max_q, std::abs(q));
  CHECK(max_q <= 1e-10);
}

TEST_CASE("friction update") {
  Reach r = flat_reach(3, 1.0, 1.0, 0.0, 0.03);
  ReachState s;
  s.area = {1.0, 1.0, 1.0};
  s.discharge = {0.0, 1.0, -2.0};

  SUBCASE("zero discharge stays zero, closed form matches bisection oracle") {
    ReachState t = s;
    friction_semi_implicit(t, r, 1.0);
    CHECK(t.discharge[0] == 0.0);
    const double expect = 1.0 / (1.0 + 9.81 * 0.03 * 0.03 * 1.0);
    CHECK(t.discharge[1] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(t.discharge[1] ==
          doctest::Approx(oracles::friction_bisection(1.0, 1.0, 0.03, 1.0, 9.81)).epsilon(1e-9));
    // dissipative, sign preserving
    CHECK(std::abs(t.discharge[2]) <= 2.0);
    CHECK(t.discharge[2] < 0.0);
  }
  SUBCASE("frictionless channel leaves discharge alone") {
    Reach r0 = flat_reach(3, 1.0, 1.0, 0.0, 1e-15);
    ReachState t = s;
    friction_semi_implicit(t, r0, 1.0);
    CHECK(t.discharge[1] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("gate discharge law") {
  DamParams dam;
  dam.discharge_coefficient = 0.6;
  dam.gate_width = 10.0;
  dam.max_opening = 1.0;

  CHECK(gate_discharge(4.0, 1.0, 0.5, 0.0, dam) == 0.0);
  CHECK(gate_discharge(2.0, 2.0, 0.5, 1.0, dam) == 0.0);
  CHECK(gate_discharge(4.0, 1.0, 0.5, 1.0, dam) ==
        doctest::Approx(0.6 * 10.0 * 0.5 * std::sqrt(2.0 * 9.81 * 3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(gate_discharge(4.0, 1.0, 1.5, 1.0, dam), std::invalid_argument);

  // monotone in opening, z, and head
  const double base = gate_discharge(4.0, 1.0, 0.5, 1.0, dam);
  CHECK(gate_discharge(4.0, 1.0, 0.7, 1.0, dam) > base);
  CHECK(gate_discharge(4.0, 1.0, 0.5, 0.5, dam) < base);
  CHECK(gate_discharge(5.0, 1.0, 0.5, 1.0, dam) > base);
}

TEST_CASE("power output") {
  DamParams dam;
  dam.turbine_efficiency = 0.9;
  CHECK(power_output(0.0, 3.0, dam) == 0.0);
  CHECK(power_output(23.02, 0.0, dam) == 0.0);
  CHECK(power_output(23.02, 3.0, dam) ==
        doctest::Approx(1000.0 * 9.81 * 0.9 * 23.02 * 3.0 / 1e6).epsilon(1e-12));
}

TEST_CASE("cfl step size") {
  Reach r = flat_reach(10, 10.0);
  ReachState s;
  s.area.assign(10, 1.0);
  s.discharge.assign(10, 0.0);
  SolverParams p;
  p.cfl = 0.5;
  CHECK(cfl_dt(s, r, p) == doctest::Approx(0.5 * 10.0 / std::sqrt(9.81)).epsilon(1e-12));

  Reach r2 = flat_reach(10, 20.0);
  CHECK(cfl_dt(s, r2, p) == doctest::Approx(2.0 * cfl_dt(s, r, p)).epsilon(1e-12));

  ReachState dry;
  dry.area.assign(10, 0.0);
  dry.discharge.assign(10, 0.0);
  CHECK(cfl_dt(dry, r, p) == p.dt_max);
}

TEST_CASE("closed cascade conserves volume") {
  CascadeTopology topo;
  topo.reaches = {flat_reach(40, 10.0, 2.0), flat_reach(40, 10.0, 2.0, -1.0)};
  topo.dams.resize(1);
  CascadeState s = lake_at_rest(topo, 2.0);
  s[0].discharge[10] = 1.0;  // disturb so something actually moves
  SolverParams p;
  const double v0 = total_volume(s, topo);
  std::vector<DamControl> ctl{DamControl{0.0, 0.0}};
  for (int k = 0; k < 1000; ++k) {
    const double dt = cfl_dt(s, topo, p);
    advance_cascade(topo, s, ctl, 0.0, dt, p);
    CHECK(std::abs(total_volume(s, topo) - v0) / v0 <= 1e-12 * (k + 1));
  }
}

TEST_CASE("dam break onto a dry bed keeps depths nonnegative") {
  CascadeTopology topo = single_reach(flat_reach(400, 2.5));
  CascadeState s;
  ReachState st;
  st.area.assign(400, 0.0);
  st.discharge.assign(400, 0.0);
  for (int i = 0; i < 200; ++i) st.area[i] = 1.0;
  s = {st};
  SolverParams p;
  std::vector<DamControl> ctl;
  for (int k = 0; k < 400; ++k) {
    const double dt = cfl_dt(s, topo, p);
    advance_cascade(topo, s, ctl, 0.0, dt, p);
    for (double a : s[0].area) REQUIRE(a >= 0.0);
  }
}

TEST_CASE("wet dam break converges to the Stoker oracle") {
  const double hl = 1.0, hr = 0.1, x0 = 500.0, t_end = 60.0;
  const oracles::StokerSolution exact(9.81, hl, hr, x0);

  auto l1_error = [&](int cells) {
    CascadeTopology topo = single_reach(flat_reach(cells, 1000.0 / cells));
    ReachState st;
    st.area.assign(cells, 0.0);
    st.discharge.assign(cells, 0.0);
    for (int i = 0; i < cells; ++i)
      st.area[i] = topo.reaches[0].bathymetry.cell_centers[i] < x0 ? hl : hr;
    CascadeState s{st};
    SolverParams p;
    std::vector<DamControl> ctl;
    double t = 0.0;
    while (t < t_end) {
      double dt = std::min(cfl_dt(s, topo, p), t_end - t);
      advance_cascade(topo, s, ctl, 0.0, dt, p);
      t += dt;
    }
    double err = 0.0;
    for (int i = 0; i < cells; ++i) {
      double h, u;
      exact.sample(topo.reaches[0].bathymetry.cell_centers[i], t_end, h, u);
      err += std::abs(s[0].area[i] - h) * topo.reaches[0].bathymetry.dx;
    }
    return err;
  };

  const double e100 = l1_error(100);
  const double e200 = l1_error(200);
  const double e400 = l1_error(400);
  CHECK(e200 < e100);
  CHECK(e400 < e200);
  const double order = std::log2(e100 / e400) / 2.0;
  CHECK(order >= 0.7);
}

TEST_CASE("gate transfer moves the expected volume") {
  CascadeTopology topo;
  topo.reaches = {flat_reach(20, 10.0), flat_reach(20, 10.0, 1.0, -2.0)};
  topo.dams.resize(1);
  topo.dams[0].max_opening = 1.0;
  CascadeState s = {lake_at_rest(topo.reaches[0], 1.0), lake_at_rest(topo.reaches[1], -1.0)};
  SolverParams p;
  const double v0 = total_volume(s, topo);
  std::vector<DamControl> ctl{DamControl{0.5, 1.0}};
  CascadeStepInfo info;
  double moved = 0.0;
  for (int k = 0; k < 50; ++k) {
    const double dt = cfl_dt(s, topo, p);
    advance_cascade(topo, s, ctl, 0.0, dt, p, &info);
    moved += dt * info.gate_flow[0];
    CHECK(info.gate_flow[0] > 0.0);
  }
  CHECK(moved > 0.0);
  CHECK(std::abs(total_volume(s, topo) - v0) / v0 <= 1e-10);
}

TEST_CASE("inflow and outfall volume balance") {
  CascadeTopology topo = single_reach(flat_reach(20, 10.0));
  topo.outfall.coefficient = 0.4;
  topo.outfall.crest_elevation = 0.8;
  CascadeState s = lake_at_rest(topo, 1.0);
  SolverParams p;
  std::vector<DamControl> ctl;
  double v = total_volume(s, topo);
  for (int k = 0; k < 200; ++k) {
    const double dt = cfl_dt(s, topo, p);
    CascadeStepInfo info;
    advance_cascade(topo, s, ctl, 3.0, dt, p, &info);
    v += dt * (info.inflow - info.outflow);
    CHECK(total_volume(s, topo) == doctest::Approx(v).epsilon(1e-10));
  }
}

}  // TEST_SUITE
