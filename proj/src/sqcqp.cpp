#include "cascade/sqcqp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace cascade {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd clamp_to_bounds(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                                const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

/// Largest tau in [0,1] with lo <= base + tau * dir <= hi.
double bound_step_fraction(const Eigen::VectorXd& base, const Eigen::VectorXd& dir,
                           const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  double tau = 1.0;
  for (int i = 0; i < base.size(); ++i) {
    if (dir[i] > 0.0 && std::isfinite(hi[i])) tau = std::min(tau, (hi[i] - base[i]) / dir[i]);
    if (dir[i] < 0.0 && std::isfinite(lo[i])) tau = std::min(tau, (lo[i] - base[i]) / dir[i]);
  }
  return std::max(0.0, tau);
}

}  // namespace

bool FilterSet::acceptable(double objective, double infeasibility) const {
  for (const Entry& e : entries_) {
    const bool better_f = objective <= e.objective - gamma_f_ * infeasibility;
    const bool better_phi = infeasibility <= (1.0 - gamma_phi_) * e.infeasibility;
    if (!better_f && !better_phi) return false;
  }
  return true;
}

void FilterSet::insert(double objective, double infeasibility) {
  std::vector<Entry> kept;
  kept.reserve(entries_.size() + 1);
  for (const Entry& e : entries_)
    if (!(objective <= e.objective && infeasibility <= e.infeasibility)) kept.push_back(e);
  kept.push_back(Entry{objective, infeasibility});
  entries_ = std::move(kept);
}

bool FilterSet::pareto_consistent() const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    for (std::size_t j = 0; j < entries_.size(); ++j) {
      if (i == j) continue;
      if (entries_[i].objective <= entries_[j].objective &&
          entries_[i].infeasibility <= entries_[j].infeasibility)
        return false;
    }
  return true;
}

void tr_update(double rho, TrustRegionState& s) {
  if (rho >= s.rho_good) {
    s.radius = std::min(s.gamma_inc * s.radius, s.radius_max);
  } else if (rho < s.rho_bad) {
    s.radius = std::max(s.gamma_dec * s.radius, s.radius_min);
  }
}

void SqcqpProblem::finalize() {
  if (dim <= 0) throw std::invalid_argument("problem dimension must be positive");
  if (!objective) throw std::invalid_argument("objective hook required");
  if (lower.size() == 0) lower = Eigen::VectorXd::Constant(dim, -kInf);
  if (upper.size() == 0) upper = Eigen::VectorXd::Constant(dim, kInf);
  if (scale.size() == 0) scale = Eigen::VectorXd::Ones(dim);
  if (lower.size() != dim || upper.size() != dim || scale.size() != dim)
    throw std::invalid_argument("bound/scale dimensions disagree");
}

namespace {

Eigen::VectorXd fd_gradient(const SqcqpProblem& p, const Eigen::VectorXd& x, double f0,
                            double h0) {
  Eigen::VectorXd g(p.dim);
  for (int i = 0; i < p.dim; ++i) {
    const double h = h0 * (1.0 + std::abs(x[i]));
    Eigen::VectorXd xp = x;
    xp[i] += h;
    double fp = p.objective(xp);
    if (!std::isfinite(fp)) {
      xp[i] = x[i] - h;
      fp = p.objective(xp);
      g[i] = (f0 - fp) / h;
    } else {
      g[i] = (fp - f0) / h;
    }
  }
  return g;
}

Eigen::MatrixXd fd_jacobian(const SqcqpProblem& p, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& c0, double h0) {
  Eigen::MatrixXd j(c0.size(), p.dim);
  for (int i = 0; i < p.dim; ++i) {
    const double h = h0 * (1.0 + std::abs(x[i]));
    Eigen::VectorXd xp = x;
    xp[i] += h;
    j.col(i) = (p.residual(xp) - c0) / h;
  }
  return j;
}

struct Evaluator {
  const SqcqpProblem& p;
  const SqcqpOptions& opt;

  Eigen::VectorXd grad(const Eigen::VectorXd& x, double f) const {
    return p.gradient ? p.gradient(x) : fd_gradient(p, x, f, opt.fd_step);
  }
  Eigen::VectorXd resid(const Eigen::VectorXd& x) const {
    return p.residual ? p.residual(x) : Eigen::VectorXd();
  }
  Eigen::MatrixXd jac(const Eigen::VectorXd& x, const Eigen::VectorXd& c) const {
    if (!p.residual) return Eigen::MatrixXd(0, p.dim);
    return p.jacobian ? p.jacobian(x) : fd_jacobian(p, x, c, opt.fd_step);
  }
};

double phi_of(const Eigen::VectorXd& c) { return c.size() ? c.norm() : 0.0; }

}  // namespace

NormalStepResult normal_step(const LocalModels& models, const SqcqpProblem& problem,
                             double radius) {
  NormalStepResult out;
  const int n = problem.dim;
  out.step = Eigen::VectorXd::Zero(n);
  if (models.residual.size() == 0 || models.residual.norm() == 0.0) {
    out.predicted_residual_norm = 0.0;
    return out;
  }

  const Eigen::VectorXd& d = problem.scale;
  const Eigen::VectorXd c = models.residual;
  const Eigen::MatrixXd js = models.jacobian * d.asDiagonal();  // scaled Jacobian

  const auto predicted = [&](const Eigen::VectorXd& m) { return (c + js * m).norm(); };
  const auto to_step = [&](const Eigen::VectorXd& m) { return (d.array() * m.array()).matrix(); };

  const Eigen::VectorXd g = js.transpose() * c;
  if (g.norm() <= 1e-14 * std::max(1.0, c.norm())) {
    out.predicted_residual_norm = c.norm();
    return out;  // stationary for the least-squares model
  }

  // Dogleg between the Cauchy point and the Gauss-Newton point.
  const double jg2 = (js * g).squaredNorm();
  const double alpha = g.squaredNorm() / std::max(jg2, 1e-300);
  Eigen::VectorXd m_c = -alpha * g;
  if (m_c.norm() > radius) m_c *= radius / m_c.norm();

  Eigen::VectorXd m = m_c;
  // Minimum-norm Gauss-Newton point: keeps the step normal to the
  // constraint manifold.
  const Eigen::VectorXd m_gn = js.completeOrthogonalDecomposition().solve(-c);
  if (m_gn.norm() <= radius) {
    m = m_gn;
  } else if (m_c.norm() < radius) {
    const Eigen::VectorXd delta = m_gn - m_c;
    const double a = delta.squaredNorm();
    const double b = 2.0 * m_c.dot(delta);
    const double cc = m_c.squaredNorm() - radius * radius;
    const double tau = (-b + std::sqrt(std::max(0.0, b * b - 4.0 * a * cc))) / (2.0 * a);
    m = m_c + tau * delta;
  }

  // Bound feasibility by projection, then guarantee predicted decrease by
  // backtracking along the projected Cauchy path.
  Eigen::VectorXd x_try = clamp_to_bounds(models.x + to_step(m), problem.lower, problem.upper);
  m = ((x_try - models.x).array() / d.array()).matrix();
  if (predicted(m) > c.norm()) {
    double a = alpha;
    for (int back = 0; back < 60; ++back) {
      a *= 0.5;
      Eigen::VectorXd mc = -a * g;
      if (mc.norm() > radius) mc *= radius / mc.norm();
      x_try = clamp_to_bounds(models.x + to_step(mc), problem.lower, problem.upper);
      m = ((x_try - models.x).array() / d.array()).matrix();
      if (predicted(m) <= c.norm()) break;
    }
    if (predicted(m) > c.norm()) m.setZero();
  }

  out.step = to_step(m);
  out.predicted_residual_norm = predicted(m);
  out.cauchy_decrease = 0.5 * (c.squaredNorm() - out.predicted_residual_norm *
                                                     out.predicted_residual_norm);
  return out;
}

TangentialStepResult tangential_step(const LocalModels& models, const SqcqpProblem& problem,
                                     const Eigen::VectorXd& normal, double radius, double eta) {
  TangentialStepResult out;
  const int n = problem.dim;
  out.step = Eigen::VectorXd::Zero(n);

  const Eigen::VectorXd& d = problem.scale;
  const Eigen::VectorXd shifted = models.x + normal;
  const Eigen::VectorXd g = d.asDiagonal() * models.shifted_gradient;
  const Eigen::MatrixXd h = d.asDiagonal() * models.hessian * d.asDiagonal();

  // Constraint-change windows from the normal step's residual improvement.
  const int m_rows = static_cast<int>(models.shifted_residual.size());
  Eigen::VectorXd widths(m_rows);
  for (int i = 0; i < m_rows; ++i)
    widths[i] = eta * std::max(std::abs(models.residual[i]) -
                                   std::abs(models.shifted_residual[i]),
                               0.0);
  const Eigen::MatrixXd js =
      m_rows ? Eigen::MatrixXd(models.shifted_jacobian * d.asDiagonal()) : Eigen::MatrixXd(0, n);

  const auto model_value = [&](const Eigen::VectorXd& m) {
    return g.dot(m) + 0.5 * m.dot(h * m);
  };

  // Variables pinned at a bound with the model pushing outward would zero
  // the whole scaled direction; drop them from the step computation.
  Eigen::MatrixXd select;  // n x n_free selection basis
  {
    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i) {
      const double span = 1e-10 * std::max(1.0, std::abs(shifted[i]));
      const bool at_lo = shifted[i] <= problem.lower[i] + span;
      const bool at_hi = shifted[i] >= problem.upper[i] - span;
      if ((at_lo && g[i] > 0.0) || (at_hi && g[i] < 0.0)) continue;
      free_idx.push_back(i);
    }
    if (free_idx.empty()) return out;
    select = Eigen::MatrixXd::Zero(n, static_cast<int>(free_idx.size()));
    for (std::size_t c = 0; c < free_idx.size(); ++c) select(free_idx[c], static_cast<int>(c)) = 1.0;
  }
  const int n_free = static_cast<int>(select.cols());

  // Dogleg minimizer of the model in the coordinates spanned by zb (columns
  // orthonormal). Returns the step in full m-coordinates; sets newton_ok.
  const auto dogleg_in = [&](const Eigen::MatrixXd& zb, bool& newton_ok) {
    const Eigen::VectorXd gr = zb.transpose() * g;
    newton_ok = false;
    if (gr.norm() <= 1e-14) return Eigen::VectorXd(Eigen::VectorXd::Zero(n));
    const Eigen::MatrixXd hr = zb.transpose() * h * zb;
    const double ghg = gr.dot(hr * gr);
    double alpha = ghg > 0.0 ? gr.squaredNorm() / ghg : radius / gr.norm();
    alpha = std::min(alpha, radius / gr.norm());
    Eigen::VectorXd y = -alpha * gr;
    Eigen::LLT<Eigen::MatrixXd> llt(hr);
    if (llt.info() == Eigen::Success) {
      const Eigen::VectorXd y_n = llt.solve(-gr);
      newton_ok = true;
      if (y_n.norm() <= radius) {
        y = y_n;
      } else if (y.norm() < radius) {
        const Eigen::VectorXd delta = y_n - y;
        const double a = delta.squaredNorm();
        const double b = 2.0 * y.dot(delta);
        const double cc = y.squaredNorm() - radius * radius;
        const double tau = (-b + std::sqrt(std::max(0.0, b * b - 4.0 * a * cc))) / (2.0 * a);
        y += tau * delta;
      }
    }
    return Eigen::VectorXd(zb * y);
  };

  // Scale a direction back into the bounds and the positive windows
  // (symmetric intervals around zero, so scaling keeps the model decrease).
  const auto make_feasible = [&](const Eigen::VectorXd& m) {
    double tau = bound_step_fraction(shifted, (d.array() * m.array()).matrix(), problem.lower,
                                     problem.upper);
    for (int i = 0; i < m_rows; ++i) {
      const double flow = std::abs(js.row(i).dot(m));
      if (flow > widths[i]) tau = std::min(tau, widths[i] / std::max(flow, 1e-300));
    }
    return Eigen::VectorXd(tau * m);
  };

  bool newton_full = false, newton_null = false;
  Eigen::VectorXd best = Eigen::VectorXd::Zero(n);
  double best_value = 0.0;

  // Candidate 1: dogleg over the free variables, scaled into the windows
  // (pays off while the windows are wide).
  {
    const Eigen::VectorXd cand = make_feasible(dogleg_in(select, newton_full));
    const double val = model_value(cand);
    if (val < best_value) {
      best = cand;
      best_value = val;
    }
  }

  // Candidate 2: step restricted to the null space of the shifted Jacobian
  // over the free variables; window-exact, so it stays effective when the
  // windows shrink to zero.
  if (m_rows > 0) {
    const Eigen::MatrixXd js_free = js * select;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(js_free, Eigen::ComputeFullV);
    const double rank_tol =
        1e-10 * std::max(1.0, svd.singularValues().size() ? svd.singularValues()[0] : 1.0);
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
      if (svd.singularValues()[i] > rank_tol) ++rank;
    if (rank < n_free) {
      const Eigen::MatrixXd z = select * svd.matrixV().rightCols(n_free - rank);
      Eigen::VectorXd cand = dogleg_in(z, newton_null);
      // Null-space steps satisfy the windows by construction; only bounds
      // can still clip.
      const double tau = bound_step_fraction(shifted, (d.array() * cand.array()).matrix(),
                                             problem.lower, problem.upper);
      cand *= tau;
      const double val = model_value(cand);
      if (val < best_value) {
        best = cand;
        best_value = val;
      }
    }
  }

  out.fallback = !(newton_full || newton_null);
  if (best_value >= 0.0) return out;  // no decrease available

  out.step = (d.array() * best.array()).matrix();
  return out;
}

double kkt_residual(const SqcqpProblem& problem, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& gradient, const Eigen::VectorXd& residual,
                    const Eigen::MatrixXd& jacobian) {
  Eigen::VectorXd grad_l = gradient;
  if (residual.size() > 0) {
    const Eigen::VectorXd lambda =
        jacobian.transpose().colPivHouseholderQr().solve(-gradient);
    grad_l += jacobian.transpose() * lambda;
  }
  const Eigen::VectorXd projected =
      clamp_to_bounds(x - grad_l, problem.lower, problem.upper) - x;
  return projected.lpNorm<Eigen::Infinity>();
}

namespace {

/// Damped BFGS update keeping the model Hessian positive definite.
void bfgs_update(Eigen::MatrixXd& h, const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
  const double sy = s.dot(y);
  const Eigen::VectorXd hs = h * s;
  const double shs = s.dot(hs);
  if (shs <= 0.0) return;
  Eigen::VectorXd yy = y;
  if (sy < 0.2 * shs) {
    const double theta = 0.8 * shs / (shs - sy);
    yy = theta * y + (1.0 - theta) * hs;
  }
  const double syy = s.dot(yy);
  if (syy <= 1e-12 * s.norm() * yy.norm()) return;
  h += yy * yy.transpose() / syy - hs * hs.transpose() / shs;
}

}  // namespace

RestorationResult restoration(const SqcqpProblem& problem, const Eigen::VectorXd& x0,
                              const FilterSet& filter, TrustRegionState tr,
                              const SqcqpOptions& options) {
  RestorationResult out;
  out.x = x0;
  const Evaluator ev{problem, options};
  tr.radius = std::max(tr.radius, 1.0);

  Eigen::VectorXd c = ev.resid(out.x);
  double phi = phi_of(c);
  int stall = 0;
  for (int k = 0; k < 10 * options.stall_limit; ++k) {
    if (phi == 0.0) return out;
    LocalModels models;
    models.x = out.x;
    models.residual = c;
    models.jacobian = ev.jac(out.x, c);
    const NormalStepResult ns = normal_step(models, problem, tr.radius);
    const Eigen::VectorXd trial = out.x + ns.step;
    const Eigen::VectorXd c_trial = ev.resid(trial);
    const double phi_trial = phi_of(c_trial);
    if (phi_trial < phi) {
      out.x = trial;
      c = c_trial;
      const double drop = phi - phi_trial;
      phi = phi_trial;
      tr.radius = std::min(tr.radius * 2.0, tr.radius_max);
      const double f_trial = problem.objective(out.x);
      if (std::isfinite(f_trial) && filter.acceptable(f_trial, phi)) return out;
      stall = drop > 1e-12 * std::max(1.0, phi) ? 0 : stall + 1;
    } else {
      tr.radius = std::max(tr.radius * 0.5, tr.radius_min);
      ++stall;
    }
    if (stall >= options.stall_limit) break;
  }
  out.stalled = true;
  return out;
}

SqcqpResult sqcqp_solve(const SqcqpProblem& problem_in, const Eigen::VectorXd& x0,
                        const SqcqpOptions& options) {
  SqcqpProblem problem = problem_in;
  problem.finalize();
  const Evaluator ev{problem, options};

  SqcqpResult res;
  res.x = clamp_to_bounds(x0, problem.lower, problem.upper);

  double f = problem.objective(res.x);
  if (!std::isfinite(f)) {
    res.status = SqcqpStatus::sentinel_start;
    return res;
  }
  Eigen::VectorXd c = ev.resid(res.x);
  Eigen::MatrixXd j = ev.jac(res.x, c);
  Eigen::VectorXd g = ev.grad(res.x, f);
  double phi = phi_of(c);

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(problem.dim, problem.dim);
  FilterSet filter(options.gamma_filter, options.gamma_filter);
  filter.insert(f, phi);
  TrustRegionState tr = options.tr;

  int stall = 0;
  for (int k = 0; k < options.max_iterations; ++k) {
    res.iterations = k + 1;
    res.kkt_residual = kkt_residual(problem, res.x, g, c, j);
    if (phi <= options.tol && res.kkt_residual <= options.tol) {
      res.status = SqcqpStatus::converged;
      break;
    }

    LocalModels models;
    models.x = res.x;
    models.objective = f;
    models.gradient = g;
    models.hessian = h;
    models.residual = c;
    models.jacobian = j;

    const NormalStepResult ns = normal_step(models, problem, tr.radius);
    const bool moved = ns.step.norm() > 0.0;
    if (moved) {
      const Eigen::VectorXd xs = res.x + ns.step;
      models.shifted_residual = ev.resid(xs);
      models.shifted_jacobian = ev.jac(xs, models.shifted_residual);
      const double fs = problem.objective(xs);
      models.shifted_gradient =
          std::isfinite(fs) ? ev.grad(xs, fs) : g;
    } else {
      models.shifted_residual = c;
      models.shifted_jacobian = j;
      models.shifted_gradient = g;
    }

    const TangentialStepResult ts =
        tangential_step(models, problem, ns.step, tr.radius, options.eta);
    const Eigen::VectorXd d = ns.step + ts.step;

    IterationRecord rec;
    rec.k = k;
    rec.radius = tr.radius;

    if (d.norm() <= 1e-15 * std::max(1.0, res.x.norm())) {
      // No step available at this radius.
      tr.radius = std::max(tr.gamma_dec * tr.radius, tr.radius_min);
      rec.objective = f;
      rec.infeasibility = phi;
      rec.rho = 0.0;
      res.history.push_back(rec);
      if (tr.radius <= tr.radius_min * (1.0 + 1e-12)) {
        if (++stall >= options.stall_limit) {
          res.status = phi > options.tol ? SqcqpStatus::infeasible_stall
                                         : SqcqpStatus::converged;
          break;
        }
      }
      continue;
    }

    const Eigen::VectorXd trial = clamp_to_bounds(res.x + d, problem.lower, problem.upper);
    const double f_trial = problem.objective(trial);
    const Eigen::VectorXd c_trial = ev.resid(trial);
    const double phi_trial = phi_of(c_trial);

    // Ratio against the objective model when it predicts a decrease; on
    // feasibility-driven steps (no predicted objective decrease) the
    // infeasibility model's prediction takes its place.
    const double pred = -(g.dot(d) + 0.5 * d.dot(h * d));
    const double pred_phi = phi - ns.predicted_residual_norm;
    double rho = -kInf;
    if (std::isfinite(f_trial)) {
      if (pred > 0.0) {
        rho = (f - f_trial) / pred;
      } else if (pred_phi > 1e-15 * std::max(1.0, phi)) {
        rho = (phi - phi_trial) / pred_phi;
      }
    }
    rec.rho = std::isfinite(rho) ? rho : -1.0;

    // +inf sentinel trials are never acceptable (barrier domain).
    const bool acceptable = std::isfinite(f_trial) && filter.acceptable(f_trial, phi_trial);

    if (acceptable) {
      const Eigen::VectorXd s = trial - res.x;
      res.x = trial;
      f = f_trial;
      c = c_trial;
      j = ev.jac(res.x, c);
      const Eigen::VectorXd g_new = ev.grad(res.x, f);
      bfgs_update(h, s, g_new - g);
      g = g_new;
      phi = phi_trial;
      filter.insert(f, phi);
      tr_update(rho, tr);
      stall = 0;
      rec.accepted = true;
    } else {
      tr_update(-kInf, tr);
      if (tr.radius <= tr.radius_min * (1.0 + 1e-12)) {
        rec.restoration = true;
        const RestorationResult rr = restoration(problem, res.x, filter, tr, options);
        if (rr.stalled) {
          rec.objective = f;
          rec.infeasibility = phi;
          res.history.push_back(rec);
          res.status = SqcqpStatus::infeasible_stall;
          break;
        }
        res.x = rr.x;
        f = problem.objective(res.x);
        c = ev.resid(res.x);
        j = ev.jac(res.x, c);
        g = ev.grad(res.x, f);
        phi = phi_of(c);
        filter.insert(f, phi);
        tr.radius = std::max(options.tr.radius * 0.1, tr.radius_min);
      }
      ++stall;
      if (stall >= 4 * options.stall_limit) {
        res.status = phi > options.tol ? SqcqpStatus::infeasible_stall : SqcqpStatus::max_iterations;
        rec.objective = f;
        rec.infeasibility = phi;
        res.history.push_back(rec);
        break;
      }
    }
    rec.objective = f;
    rec.infeasibility = phi;
    res.history.push_back(rec);
  }

  res.objective = f;
  res.infeasibility = phi;
  res.kkt_residual = kkt_residual(problem, res.x, g, c, j);
  if (res.status == SqcqpStatus::max_iterations && phi <= options.tol &&
      res.kkt_residual <= options.tol)
    res.status = SqcqpStatus::converged;
  return res;
}

void write_history_csv(const std::string& path, const std::vector<IterationRecord>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "k,F,phi,Delta,rho,accepted,restoration_flag\n";
  char line[160];
  for (const IterationRecord& r : history) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%d,%d\n", r.k, r.objective,
                  r.infeasibility, r.radius, r.rho, r.accepted ? 1 : 0, r.restoration ? 1 : 0);
    out << line;
  }
}

}  // namespace cascade
