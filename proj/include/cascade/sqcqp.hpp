#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cascade {

/// Pareto frontier of (objective, infeasibility) pairs. Acceptability uses
/// slanting margins: a trial is acceptable against entry j when
///   F <= F_j - gamma_f * phi   or   phi <= (1 - gamma_phi) * phi_j.
class FilterSet {
 public:
  struct Entry {
    double objective;
    double infeasibility;
  };

  explicit FilterSet(double gamma_f = 1e-4, double gamma_phi = 1e-4)
      : gamma_f_(gamma_f), gamma_phi_(gamma_phi) {}

  bool acceptable(double objective, double infeasibility) const;
  void insert(double objective, double infeasibility);
  const std::vector<Entry>& entries() const { return entries_; }
  /// True when no entry dominates another (class invariant; exposed for tests).
  bool pareto_consistent() const;

 private:
  std::vector<Entry> entries_;
  double gamma_f_;
  double gamma_phi_;
};

struct TrustRegionState {
  double radius = 1.0;
  double radius_min = 1e-8;
  double radius_max = 1e2;
  double rho_bad = 0.1;
  double rho_good = 0.75;
  double gamma_dec = 0.5;
  double gamma_inc = 2.0;
};

/// rho >= rho_good grows the radius, rho < rho_bad shrinks it, in between
/// leaves it unchanged. Callers pass rho = -inf when the predicted
/// reduction was not positive.
void tr_update(double rho, TrustRegionState& state);

/// Problem hooks. The objective may return +inf as a sentinel (outside the
/// barrier domain); such trial points are always rejected. residual/jacobian
/// are optional (empty residual means phi == 0 identically). gradient
/// defaults to forward differences of the objective.
struct SqcqpProblem {
  int dim = 0;
  Eigen::VectorXd lower;  // may be -inf
  Eigen::VectorXd upper;  // may be +inf
  Eigen::VectorXd scale;  // per-variable trust-region scaling; default 1

  std::function<double(const Eigen::VectorXd&)> objective;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residual;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;

  void finalize();  // fills defaults, validates
};

/// First- and second-order data at the current point and at the shifted
/// point x + n (the tilde quantities).
struct LocalModels {
  Eigen::VectorXd x;
  double objective = 0.0;
  Eigen::VectorXd gradient;        // at x
  Eigen::MatrixXd hessian;         // model Hessian at x (BFGS)
  Eigen::VectorXd residual;        // c(x)
  Eigen::MatrixXd jacobian;        // J(x)
  Eigen::VectorXd shifted_gradient;  // at x + n
  Eigen::VectorXd shifted_residual;  // c(x + n)
  Eigen::MatrixXd shifted_jacobian;  // J(x + n)
};

struct NormalStepResult {
  Eigen::VectorXd step;
  double predicted_residual_norm = 0.0;  // ||c + J n|| after the step
  double cauchy_decrease = 0.0;          // certificate: model decrease achieved
};

/// Ball-constrained Gauss-Newton dogleg on 1/2 ||c + J n||^2 with bound
/// feasibility of x + n; never predicts an infeasibility increase.
NormalStepResult normal_step(const LocalModels& models, const SqcqpProblem& problem,
                             double radius);

struct TangentialStepResult {
  Eigen::VectorXd step;
  bool fallback = false;  // subproblem degenerated to the safeguarded step
};

/// Reduces the quadratic objective model inside the trust region, the
/// bounds, and the constraint-change windows +-eta * (residual improvement
/// of the normal step). Zero-width windows confine the step to the null
/// space of the shifted Jacobian.
TangentialStepResult tangential_step(const LocalModels& models, const SqcqpProblem& problem,
                                     const Eigen::VectorXd& normal, double radius, double eta);

enum class SqcqpStatus { converged, max_iterations, infeasible_stall, sentinel_start };

struct IterationRecord {
  int k = 0;
  double objective = 0.0;
  double infeasibility = 0.0;
  double radius = 0.0;
  double rho = 0.0;
  bool accepted = false;
  bool restoration = false;
};

struct SqcqpOptions {
  double tol = 1e-6;
  int max_iterations = 100;
  double eta = 0.9;
  TrustRegionState tr;
  double gamma_filter = 1e-4;
  int stall_limit = 20;
  double fd_step = 1e-6;  // for defaulted gradients/jacobians
};

struct SqcqpResult {
  Eigen::VectorXd x;
  SqcqpStatus status = SqcqpStatus::max_iterations;
  double objective = 0.0;
  double infeasibility = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  std::vector<IterationRecord> history;
};

/// Composite-step filter trust-region SQCQP: normal step, tangential step,
/// filter acceptance with slanting margins, trust-region update, and a
/// feasibility-restoration phase when rejected steps shrink the radius to
/// its floor.
SqcqpResult sqcqp_solve(const SqcqpProblem& problem, const Eigen::VectorXd& x0,
                        const SqcqpOptions& options = {});

/// Pure feasibility restoration: normal steps accepted on phi decrease,
/// stopping at the first filter-acceptable point. Throws nothing; a stall is
/// reported through the flag.
struct RestorationResult {
  Eigen::VectorXd x;
  bool stalled = false;
};
RestorationResult restoration(const SqcqpProblem& problem, const Eigen::VectorXd& x,
                              const FilterSet& filter, TrustRegionState tr,
                              const SqcqpOptions& options);

/// Stationarity measure: projected gradient of the Lagrangian with
/// least-squares multipliers (plain projected gradient when no residuals).
double kkt_residual(const SqcqpProblem& problem, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& gradient, const Eigen::VectorXd& residual,
                    const Eigen::MatrixXd& jacobian);

/// Writes history as CSV: k,F,phi,Delta,rho,accepted,restoration_flag.
void write_history_csv(const std::string& path, const std::vector<IterationRecord>& history);

}  // namespace cascade
