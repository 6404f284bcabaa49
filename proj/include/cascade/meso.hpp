#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cascade/offline.hpp"

namespace cascade {

/// One candidate control trajectory: binary z on intervals 0..N_T-2, relaxed
/// z in [0,1] on the final interval, plus the continuous openings.
struct Particle {
  std::vector<std::vector<double>> z;  // [dam][interval]
  std::vector<std::vector<double>> v;
  double value = std::numeric_limits<double>::infinity();  // latest ADP J
  int age = 0;
  std::string provenance = "init";

  int intervals() const { return z.empty() ? 0 : static_cast<int>(z[0].size()); }
  bool prefix_binary() const;
};

struct Ensemble {
  std::vector<Particle> particles;
  int generation = 0;
  std::uint64_t seed = 1;
  std::uint64_t mutation_counter = 0;  // drives the low-discrepancy index sequence
};

struct MesoConfig {
  int population = 12;
  double mutation_fraction = 0.5;  // lambda
  int validate_every = 5;          // K_val generations
  double terminal_default = 0.0;
  SqcqpOptions adp;
  bool parallel = true;

  MesoConfig() {
    adp.max_iterations = 15;
    adp.tol = 1e-4;
  }
};

struct AdpResult {
  double value = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> refined_v;
  std::vector<std::vector<double>> refined_final_z;  // relaxed tail column
  SqcqpStatus status = SqcqpStatus::max_iterations;
};

/// Solves the particle's horizon problem over (v, relaxed final z) with the
/// binary prefix fixed: stage costs plus the scenario-mean catalog terminal
/// value at the augmented terminal states. Writes the refined controls back
/// into the result; an infeasible solve returns the +inf sentinel.
AdpResult adp_evaluate(const Particle& particle, const OcpInstance& instance,
                       const CatalogStore& catalog, const MesoConfig& config);

/// Builds the schedule a particle induces on the instance grid.
ControlSchedule particle_schedule(const Particle& particle, const OcpInstance& instance);

/// Objective value of a schedule including the catalog terminal term (the
/// quantity adp_evaluate minimizes), for validation and logging.
double adp_objective(const ControlSchedule& schedule, const OcpInstance& instance,
                     const CatalogStore& catalog, const MesoConfig& config);

/// Flips 1-2 distinct binary prefix entries chosen by a van der Corput
/// low-discrepancy index sequence; the relaxed tail is untouched.
void mutate(Particle& particle, std::uint64_t& counter, std::uint64_t seed);

struct MesoStepInfo {
  int generation = 0;
  double best_value = 0.0;
  double median_value = 0.0;
  int replacements = 0;
  int mutations = 0;
  double validation_discrepancy = std::numeric_limits<double>::quiet_NaN();
  int best_index = 0;
};

/// One generation of Algorithm-style particle evolution: concurrent ADP
/// evaluation, ranking, catalog-seeded replacement of the worst quartile,
/// low-discrepancy mutation of a lambda fraction (elites excluded), elite
/// retention, and periodic fine-grid validation of the best particle.
MesoStepInfo meso_iterate(Ensemble& ensemble, const OcpInstance& instance,
                          const CatalogStore& catalog, const MesoConfig& config,
                          const OcpInstance* fine_instance = nullptr);

/// Seeds an ensemble from catalog schedules (nearest-interval resampling onto
/// the instance grid) padded with perturbed copies of a baseline schedule.
Ensemble seed_ensemble(const OcpInstance& instance, const CatalogStore& catalog,
                       const ControlSchedule& baseline, const MesoConfig& config,
                       std::uint64_t seed);

struct CommitResult {
  std::vector<double> v;  // committed first-interval controls per dam
  std::vector<double> z;
};

/// Commits the best particle's first interval, shifts every schedule left by
/// one interval (the incoming relaxed value is rounded into the binary
/// prefix), and appends a relaxed tail interval copying each particle's last
/// value.
CommitResult advance_window(Ensemble& ensemble, const MesoStepInfo& last_info);

/// Appends one generation-log CSV row; writes the header when the file is
/// new. Columns: generation,best_J,median_J,replacements,mutations,
/// validation_discrepancy.
void append_generation_log(const std::string& path, const MesoStepInfo& info);

}  // namespace cascade
