#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cascade/ocp.hpp"
#include "cascade/sqcqp.hpp"

namespace cascade {

/// One branch-and-bound node: a partial binary assignment plus its
/// relaxation bound (the node's subtree lower bound, exact when the
/// relaxation solves globally).
struct BBNode {
  std::vector<std::optional<int>> fixed;  // flattened (dam, interval) entries
  double bound = -std::numeric_limits<double>::infinity();
  int depth = 0;
  int parent = -1;
  std::vector<double> relaxed_z;  // relaxation optimum, branching guidance
  std::vector<double> relaxed_v;
};

struct CatalogEntry {
  std::vector<double> initial_summary;   // per-reach mean depth, mean discharge
  ControlSchedule schedule;
  double objective = 0.0;                // J over the full solved horizon
  double tail_cost = 0.0;                // J_tail beyond the anchor point
  std::vector<double> terminal_state;    // augmented state at the anchor
  int feasible = 1;                      // chi
  std::uint64_t seed = 0;
  std::string provenance;                // bb | greedy | sur | rl | hierarchical | meso-feedback
};

/// Logistic feasibility predictor over standardized features.
class FeasibilityClassifier {
 public:
  explicit FeasibilityClassifier(int dim, double learning_rate = 0.1)
      : weights_(dim, 0.0), learning_rate_(learning_rate) {}

  double predict(const std::vector<double>& features) const;
  void update(const std::vector<double>& features, int label);
  int training_count() const { return training_count_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  std::vector<double> weights_;
  double bias_ = 0.0;
  double learning_rate_;
  int training_count_ = 0;
};

/// Tabular policy over bucketed continuous actions; single-step (episodic
/// reward) Q updates with epsilon-greedy sampling. learning_rate <= 0
/// selects visit-count averaging (rate 1/N(s,a)).
class BucketedPolicy {
 public:
  BucketedPolicy(std::vector<std::vector<double>> bucket_centers, int state_bins,
                 double epsilon = 0.2, double learning_rate = 0.1);

  int num_actions() const { return static_cast<int>(actions_.size()); }
  const std::vector<double>& action(int a) const { return actions_[a]; }
  double q(int state_bin, int action) const { return table_[index(state_bin, action)]; }
  void update(int state_bin, int action, double reward);
  int select(int state_bin, CounterRng& rng) const;  // epsilon-greedy
  int greedy(int state_bin) const;

 private:
  std::size_t index(int s, int a) const { return static_cast<std::size_t>(s) * actions_.size() + a; }
  std::vector<std::vector<double>> actions_;  // cartesian product of centers
  std::vector<double> table_;
  std::vector<int> visits_;
  int state_bins_;
  double epsilon_;
  double learning_rate_;
};

/// Append-only, versioned, line-delimited JSON store with nearest-neighbor
/// terminal-value queries V(x) = min_c (J_tail + kappa * scaled distance).
class CatalogStore {
 public:
  CatalogStore() = default;

  static CatalogStore load(const std::string& path);  // compacts on load
  void attach(const std::string& path);               // future inserts also append
  void insert(const CatalogEntry& entry);

  double query_value(const std::vector<double>& x) const;
  const CatalogEntry* query_entry(const std::vector<double>& x) const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<CatalogEntry>& entries() const { return entries_; }

  double kappa = 1.0;
  std::vector<double> distance_scale;  // per-dimension; empty = 1
  double default_value = 0.0;          // V_0 for empty-store queries
  mutable int empty_queries = 0;

 private:
  double scaled_distance(const std::vector<double>& a, const std::vector<double>& b) const;
  std::vector<CatalogEntry> entries_;
  std::string path_;
};

/// Augmented state features: per-reach mean depth and discharge, last
/// controls, inflow and price at the anchor time.
std::vector<double> augmented_state(const CascadeState& states, const CascadeTopology& topology,
                                    const std::vector<double>& last_v,
                                    const std::vector<double>& last_z, double inflow,
                                    double price);

std::vector<double> initial_summary(const CascadeState& states, const CascadeTopology& topology);

// -------- offline optimization over one instance --------

enum class BBStatus { optimal, budget };

struct BBResult {
  ControlSchedule schedule;
  double objective = std::numeric_limits<double>::infinity();
  BBStatus status = BBStatus::budget;
  int nodes = 0;
  std::vector<CatalogEntry> incumbents;
};

struct BBOptions {
  int node_budget = 10000;
  SqcqpOptions relaxation;
  int multistart = 2;
  double integral_tol = 1e-6;
  bool optimize_v = true;  // false: v frozen at the base schedule
};

/// Best-first branch and bound over the binary z entries; relaxations are
/// solved by sqcqp with z in [0,1] warm-started from the parent, branching
/// on the most fractional entry.
BBResult bb_solve(const OcpInstance& instance, const ControlSchedule& base, int node_budget,
                  const BBOptions& options = {});

/// Classic sum-up rounding per dam: open when the accumulated relaxed
/// integral minus the committed integral reaches half an interval. The
/// prefix bound |sum (zbar - z) dt| <= dt holds for every prefix.
ControlSchedule sum_up_rounding(const ControlSchedule& relaxed);

struct GreedyOptions {
  int budget = 200;      // candidate evaluations
  double v_step = 0.1;   // +- move size on v entries
  int tabu = 10;
};

/// Steepest-descent local search over single z flips and single v moves
/// with a short tabu list; never returns a schedule worse than the input.
ControlSchedule greedy_improve(const OcpInstance& instance, const ControlSchedule& start,
                               const GreedyOptions& options = {});

struct HierarchicalOptions {
  int max_switches = 2;  // per dam
  SqcqpOptions inner;
  int time_multistarts = 3;
};

/// Outer exhaustive loop over switch-count vectors; inner continuous solve
/// over switch times (as ordered offsets) and v. Relaxed z values are the
/// per-interval time fractions, so the inner problem is smooth; the result
/// is recomposed onto the schedule grid.
ControlSchedule hierarchical_solve(const OcpInstance& instance, const ControlSchedule& base,
                                   const HierarchicalOptions& options = {});

struct DoaResult {
  std::vector<int> labels;                        // cluster id, -1 unresolved
  std::vector<std::vector<double>> representatives;
  std::vector<std::vector<int>> members;
};

/// Clusters control samples by the minimizer their local descent reaches
/// (tolerance 1e-3 in decision space).
DoaResult domains_of_attraction(const std::function<SqcqpResult(const std::vector<double>&)>& solve,
                                const std::vector<std::vector<double>>& samples,
                                double tol = 1e-3);

struct BuildConfig {
  std::vector<double> depth_lattice{1.0, 1.5, 2.0};
  std::vector<double> inflow_lattice{1.0, 2.0, 4.0};
  int horizon_intervals = 4;
  int tail_intervals = 2;  // anchor split for terminal values
  double interval = 600.0;
  int scenarios = 2;
  int bb_budget = 60;
  int rl_episodes = 40;
  std::uint64_t master_seed = 1;
  std::string catalog_path;
};

struct BuildSummary {
  int lattice_points = 0;
  int inserted = 0;
  int failures = 0;
  int rl_episodes = 0;
  double classifier_accuracy = 0.0;
};

/// Runs the offline layer over an initial-condition lattice: branch and
/// bound, hierarchical switch optimization, greedy improvement and sum-up
/// rounding of the root relaxation, plus the episodic RL loop. Feasible
/// results are inserted with provenance; deterministic per master seed.
BuildSummary build_catalog(const CascadeTopology& topology, const ForecastModel& model,
                           const ObjectiveParams& objective, const BuildConfig& config,
                           CatalogStore& store, FeasibilityClassifier* classifier = nullptr,
                           BucketedPolicy* policy = nullptr);

/// Episodic offline RL: sample bucketed controls epsilon-greedily, simulate,
/// update the policy on finite rewards and the classifier on failures.
int offline_rl_run(const OcpInstance& instance, const ControlSchedule& base, int episodes,
                   BucketedPolicy& policy, FeasibilityClassifier& classifier, std::uint64_t seed,
                   CatalogStore* store = nullptr);

}  // namespace cascade
