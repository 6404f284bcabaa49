#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace cascade {

inline constexpr double kGravity = 9.81;    // [m/s^2]
inline constexpr double kDryTol = 1e-8;     // wetted area [m^2] below which a cell counts as dry
inline constexpr double kWaterDensity = 1000.0;  // [kg/m^3]

/// Thrown when a numerical routine fails to converge.
class NonconvergenceError : public std::runtime_error {
 public:
  NonconvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Thrown when an internal invariant is violated (should never fire).
class DefectError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Cell-centered bed geometry of one reach. Cells are uniform.
struct Bathymetry {
  std::vector<double> cell_centers;   // x [m]
  std::vector<double> bed_elevation;  // z_b [m]
  double dx = 1.0;                    // cell width [m]

  std::size_t size() const { return bed_elevation.size(); }
  void validate() const;
};

/// PDE state of one reach: wetted area and discharge per cell.
struct ReachState {
  std::vector<double> area;       // A [m^2], >= 0
  std::vector<double> discharge;  // Q [m^3/s]
  double time = 0.0;              // [s]

  std::size_t size() const { return area.size(); }
};

/// Gate/turbine parameters of one dam.
struct DamParams {
  double discharge_coefficient = 0.6;  // Cd, dimensionless
  double gate_width = 10.0;            // w [m]
  double max_opening = 1.0;            // v_max [m]
  double turbine_efficiency = 0.9;     // eta_t in (0,1]
  double head_reference = 0.0;         // tailwater reference level [m]

  void validate() const;
};

/// One river reach: geometry plus roughness and channel width.
struct Reach {
  Bathymetry bathymetry;
  double manning_n = 0.03;   // n_M [s/m^{1/3}]
  double channel_width = 1.0;  // rectangular prismatic channel [m]
};

/// Downstream stage port: rating-curve weir at the cascade outlet.
/// Q_out = coefficient * width * sqrt(2g) * max(eta - crest, 0)^{3/2}.
/// coefficient = 0 closes the outlet.
struct OutfallWeir {
  double coefficient = 0.0;
  double crest_elevation = 0.0;
};

/// An ordered chain of reaches coupled by dams. Reach 0 receives the
/// upstream inflow in its first cell; the last reach discharges through
/// the outfall weir.
struct CascadeTopology {
  std::vector<Reach> reaches;
  std::vector<DamParams> dams;  // dams.size() == reaches.size() - 1
  OutfallWeir outfall;

  std::size_t num_reaches() const { return reaches.size(); }
  std::size_t num_dams() const { return dams.size(); }
  void validate() const;
};

using CascadeState = std::vector<ReachState>;

/// Water depth of one cell, h = A / channel_width.
inline double cell_depth(double area, double width) { return area / width; }

/// Free-surface elevation of one cell.
inline double surface_elevation(double area, double width, double bed) {
  return bed + area / width;
}

double total_volume(const ReachState& state, const Reach& reach);
double total_volume(const CascadeState& states, const CascadeTopology& topology);

/// Lake-at-rest state at surface elevation eta (cells above eta stay dry).
ReachState lake_at_rest(const Reach& reach, double eta);
CascadeState lake_at_rest(const CascadeTopology& topology, double eta);

/// Writes one reach snapshot as CSV rows "x,z_b,A,Q" with a header line.
void write_state_csv(const std::string& path, const ReachState& state, const Reach& reach);

}  // namespace cascade
