#include "cascade/offline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>

#include <json.hpp>

namespace cascade {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
using nlohmann::json;
}  // namespace

double FeasibilityClassifier::predict(const std::vector<double>& features) const {
  double acc = bias_;
  for (std::size_t i = 0; i < weights_.size() && i < features.size(); ++i)
    acc += weights_[i] * features[i];
  return 1.0 / (1.0 + std::exp(-acc));
}

void FeasibilityClassifier::update(const std::vector<double>& features, int label) {
  const double err = static_cast<double>(label) - predict(features);
  for (std::size_t i = 0; i < weights_.size() && i < features.size(); ++i)
    weights_[i] += learning_rate_ * err * features[i];
  bias_ += learning_rate_ * err;
  ++training_count_;
}

BucketedPolicy::BucketedPolicy(std::vector<std::vector<double>> bucket_centers, int state_bins,
                               double epsilon, double learning_rate)
    : state_bins_(state_bins), epsilon_(epsilon), learning_rate_(learning_rate) {
  // Cartesian product of the per-dimension centers.
  actions_.push_back({});
  for (const auto& centers : bucket_centers) {
    std::vector<std::vector<double>> next;
    for (const auto& prefix : actions_)
      for (double c : centers) {
        auto a = prefix;
        a.push_back(c);
        next.push_back(std::move(a));
      }
    actions_ = std::move(next);
  }
  table_.assign(static_cast<std::size_t>(state_bins_) * actions_.size(), 0.0);
  visits_.assign(table_.size(), 0);
}

void BucketedPolicy::update(int state_bin, int action, double reward) {
  if (!std::isfinite(reward)) return;  // infeasible episodes train the classifier instead
  const std::size_t i = index(state_bin, action);
  const double rate = learning_rate_ > 0.0 ? learning_rate_ : 1.0 / ++visits_[i];
  table_[i] += rate * (reward - table_[i]);
}

int BucketedPolicy::greedy(int state_bin) const {
  int best = 0;
  for (int a = 1; a < num_actions(); ++a)
    if (q(state_bin, a) > q(state_bin, best)) best = a;
  return best;
}

int BucketedPolicy::select(int state_bin, CounterRng& rng) const {
  if (rng.next_uniform() < epsilon_)
    return static_cast<int>(rng.next_below(static_cast<std::uint64_t>(num_actions())));
  return greedy(state_bin);
}

namespace {

json entry_to_json(const CatalogEntry& e) {
  json j;
  j["initial"] = e.initial_summary;
  j["t_grid"] = e.schedule.t_grid;
  j["v"] = e.schedule.v;
  j["z"] = e.schedule.z;
  j["relaxed"] = e.schedule.relaxed;
  j["objective"] = e.objective;
  j["tail_cost"] = e.tail_cost;
  j["terminal"] = e.terminal_state;
  j["feasible"] = e.feasible;
  j["seed"] = e.seed;
  j["provenance"] = e.provenance;
  return j;
}

CatalogEntry entry_from_json(const json& j) {
  CatalogEntry e;
  e.initial_summary = j.at("initial").get<std::vector<double>>();
  e.schedule.t_grid = j.at("t_grid").get<std::vector<double>>();
  e.schedule.v = j.at("v").get<std::vector<std::vector<double>>>();
  e.schedule.z = j.at("z").get<std::vector<std::vector<double>>>();
  e.schedule.relaxed = j.at("relaxed").get<bool>();
  e.objective = j.at("objective").get<double>();
  e.tail_cost = j.at("tail_cost").get<double>();
  e.terminal_state = j.at("terminal").get<std::vector<double>>();
  e.feasible = j.at("feasible").get<int>();
  e.seed = j.at("seed").get<std::uint64_t>();
  e.provenance = j.at("provenance").get<std::string>();
  return e;
}

constexpr const char* kCatalogHeader = R"({"format":"cascade-catalog","version":1})";

}  // namespace

CatalogStore CatalogStore::load(const std::string& path) {
  CatalogStore store;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open catalog " + path);
  std::string line;
  bool first = true;
  std::vector<std::string> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      const json header = json::parse(line, nullptr, false);
      if (header.is_discarded() || header.value("format", "") != "cascade-catalog")
        throw std::runtime_error("not a catalog file: " + path);
      continue;
    }
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) continue;  // compaction drops malformed records
    const std::string key = j.dump();
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;  // dedup
    seen.push_back(key);
    store.entries_.push_back(entry_from_json(j));
  }
  store.path_ = path;
  return store;
}

void CatalogStore::attach(const std::string& path) {
  path_ = path;
  std::ifstream probe(path);
  if (!probe.good()) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot create catalog " + path);
    out << kCatalogHeader << "\n";
  }
}

void CatalogStore::insert(const CatalogEntry& entry) {
  entries_.push_back(entry);
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to catalog " + path_);
    out << entry_to_json(entry).dump() << "\n";
  }
}

double CatalogStore::scaled_distance(const std::vector<double>& a,
                                     const std::vector<double>& b) const {
  double acc = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double s = i < distance_scale.size() ? distance_scale[i] : 1.0;
    const double d = (a[i] - b[i]) / s;
    acc += d * d;
  }
  return std::sqrt(acc);
}

const CatalogEntry* CatalogStore::query_entry(const std::vector<double>& x) const {
  const CatalogEntry* best = nullptr;
  double best_value = kInf;
  for (const CatalogEntry& e : entries_) {
    if (!e.feasible) continue;
    const double v = e.tail_cost + kappa * scaled_distance(x, e.terminal_state);
    if (v < best_value) {
      best_value = v;
      best = &e;
    }
  }
  return best;
}

double CatalogStore::query_value(const std::vector<double>& x) const {
  const CatalogEntry* best = query_entry(x);
  if (!best) {
    ++empty_queries;
    return default_value;
  }
  return best->tail_cost + kappa * scaled_distance(x, best->terminal_state);
}

std::vector<double> augmented_state(const CascadeState& states, const CascadeTopology& topology,
                                    const std::vector<double>& last_v,
                                    const std::vector<double>& last_z, double inflow,
                                    double price) {
  std::vector<double> x;
  for (std::size_t r = 0; r < states.size(); ++r) {
    double h = 0.0, q = 0.0;
    for (std::size_t i = 0; i < states[r].size(); ++i) {
      h += states[r].area[i] / topology.reaches[r].channel_width;
      q += states[r].discharge[i];
    }
    x.push_back(h / states[r].size());
    x.push_back(q / states[r].size());
  }
  x.insert(x.end(), last_v.begin(), last_v.end());
  x.insert(x.end(), last_z.begin(), last_z.end());
  x.push_back(inflow);
  x.push_back(price);
  return x;
}

std::vector<double> initial_summary(const CascadeState& states,
                                    const CascadeTopology& topology) {
  std::vector<double> x;
  for (std::size_t r = 0; r < states.size(); ++r) {
    double h = 0.0, q = 0.0;
    for (std::size_t i = 0; i < states[r].size(); ++i) {
      h += states[r].area[i] / topology.reaches[r].channel_width;
      q += states[r].discharge[i];
    }
    x.push_back(h / states[r].size());
    x.push_back(q / states[r].size());
  }
  return x;
}

// ---------------------------------------------------------------------------
// branch and bound
// ---------------------------------------------------------------------------

namespace {

struct RelaxationContext {
  const OcpInstance& instance;
  ControlSchedule schedule;  // relaxed working copy
  ScheduleLayout layout;

  SqcqpProblem problem(const std::vector<std::optional<int>>& fixed,
                       std::vector<double>& lo, std::vector<double>& hi) {
    layout.bounds(instance.topology, schedule, lo, hi);
    const int nv = layout.n_v;
    for (std::size_t e = 0; e < fixed.size(); ++e)
      if (fixed[e].has_value()) {
        lo[nv + e] = hi[nv + e] = static_cast<double>(*fixed[e]);
      }
    SqcqpProblem p;
    p.dim = layout.dim();
    p.lower = Eigen::Map<const Eigen::VectorXd>(lo.data(), p.dim);
    p.upper = Eigen::Map<const Eigen::VectorXd>(hi.data(), p.dim);
    p.objective = [this](const Eigen::VectorXd& x) {
      std::vector<double> xv(x.data(), x.data() + x.size());
      layout.unpack(xv, schedule);
      return instance.evaluate(schedule);
    };
    return p;
  }
};

}  // namespace

BBResult bb_solve(const OcpInstance& instance, const ControlSchedule& base, int node_budget,
                  const BBOptions& options) {
  ControlSchedule relaxed = base;
  relaxed.relaxed = true;
  std::vector<std::vector<std::uint8_t>> all_free(
      base.dams(), std::vector<std::uint8_t>(base.intervals(), 1));
  RelaxationContext ctx{instance, relaxed,
                        options.optimize_v ? ScheduleLayout::with_free_z(relaxed, all_free)
                                           : ScheduleLayout::z_only(relaxed)};

  const int nz = ctx.layout.n_z;
  const int nv = ctx.layout.n_v;

  BBResult result;
  result.schedule = base;

  const auto evaluate_binary = [&](const std::vector<double>& v, const std::vector<double>& z) {
    ControlSchedule s = base;
    s.relaxed = false;
    if (options.optimize_v) {
      std::size_t iv = 0;
      for (auto& row : s.v)
        for (double& x : row) x = v[iv++];
    }
    std::size_t iz = 0;
    for (auto& row : s.z)
      for (double& x : row) x = std::round(z[iz++]);
    return std::pair<ControlSchedule, double>(s, instance.evaluate(s));
  };

  const auto solve_relaxation = [&](BBNode& node, const std::vector<double>* warm_v,
                                    const std::vector<double>* warm_z) {
    std::vector<double> lo, hi;
    SqcqpProblem p = ctx.problem(node.fixed, lo, hi);
    double best = kInf;
    Eigen::VectorXd best_x;
    std::vector<Eigen::VectorXd> starts;
    {
      Eigen::VectorXd x0(p.dim);
      for (int i = 0; i < nv; ++i) x0[i] = 0.5 * (lo[i] + hi[i]);
      for (int e = 0; e < nz; ++e)
        x0[nv + e] = node.fixed[e].has_value() ? static_cast<double>(*node.fixed[e]) : 0.5;
      starts.push_back(x0);
      if (warm_v && warm_z) {
        Eigen::VectorXd w(p.dim);
        for (int i = 0; i < nv; ++i) w[i] = (*warm_v)[i];
        for (int e = 0; e < nz; ++e) w[nv + e] = (*warm_z)[e];
        starts.push_back(w);
      }
    }
    for (std::size_t s = 0; s < starts.size() && s < static_cast<std::size_t>(options.multistart);
         ++s) {
      const SqcqpResult r = sqcqp_solve(p, starts[s], options.relaxation);
      if (std::isfinite(r.objective) && r.objective < best) {
        best = r.objective;
        best_x = r.x;
      }
    }
    node.bound = best;
    if (best_x.size() == p.dim) {
      node.relaxed_v.assign(best_x.data(), best_x.data() + nv);
      node.relaxed_z.assign(best_x.data() + nv, best_x.data() + nv + nz);
    }
  };

  const auto cmp = [](const BBNode& a, const BBNode& b) {
    if (a.bound != b.bound) return a.bound > b.bound;  // min-heap on the bound
    return a.depth < b.depth;                          // deeper first on ties
  };
  std::priority_queue<BBNode, std::vector<BBNode>, decltype(cmp)> tree(cmp);

  BBNode root;
  root.fixed.assign(nz, std::nullopt);
  solve_relaxation(root, nullptr, nullptr);
  ++result.nodes;
  if (std::isfinite(root.bound)) tree.push(root);

  double incumbent = kInf;
  while (!tree.empty()) {
    if (result.nodes >= node_budget) {
      result.status = BBStatus::budget;
      result.objective = incumbent;
      return result;
    }
    BBNode node = tree.top();
    tree.pop();
    if (node.bound >= incumbent) continue;  // prune
    if (node.relaxed_z.empty()) continue;

    // Most fractional free entry.
    int branch = -1;
    double frac_best = -1.0;
    for (int e = 0; e < nz; ++e) {
      if (node.fixed[e].has_value()) continue;
      const double frac = std::min(node.relaxed_z[e], 1.0 - node.relaxed_z[e]);
      if (frac > frac_best) {
        frac_best = frac;
        branch = e;
      }
    }

    const bool integral = frac_best <= options.integral_tol;
    if (branch < 0 || integral) {
      auto [sched, value] = evaluate_binary(node.relaxed_v, node.relaxed_z);
      if (std::isfinite(value) && value < incumbent) {
        incumbent = value;
        result.schedule = sched;
        result.objective = value;
        CatalogEntry e;
        e.schedule = sched;
        e.objective = value;
        e.feasible = 1;
        e.provenance = "bb";
        result.incumbents.push_back(std::move(e));
      }
      continue;
    }

    for (int value = 0; value <= 1; ++value) {
      BBNode child;
      child.fixed = node.fixed;
      child.fixed[branch] = value;
      child.depth = node.depth + 1;
      solve_relaxation(child, &node.relaxed_v, &node.relaxed_z);
      ++result.nodes;
      if (!std::isfinite(child.bound)) continue;  // relaxation infeasible
      if (child.bound >= incumbent) continue;
      tree.push(std::move(child));
    }
  }
  result.status = BBStatus::optimal;
  result.objective = incumbent;
  return result;
}

// ---------------------------------------------------------------------------

ControlSchedule sum_up_rounding(const ControlSchedule& relaxed) {
  ControlSchedule out = relaxed;
  out.relaxed = false;
  for (int d = 0; d < relaxed.dams(); ++d) {
    double acc = 0.0;       // integral of zbar
    double committed = 0.0;  // integral of z
    for (int k = 0; k < relaxed.intervals(); ++k) {
      const double dt = relaxed.t_grid[k + 1] - relaxed.t_grid[k];
      acc += relaxed.z[d][k] * dt;
      if (acc - committed >= 0.5 * dt) {
        out.z[d][k] = 1.0;
        committed += dt;
      } else {
        out.z[d][k] = 0.0;
      }
    }
  }
  return out;
}

ControlSchedule greedy_improve(const OcpInstance& instance, const ControlSchedule& start,
                               const GreedyOptions& options) {
  ControlSchedule best = start;
  double best_value = instance.evaluate(best);
  ControlSchedule current = best;
  double current_value = best_value;

  struct Move {
    int kind;  // 0: z flip, 1: v minus, 2: v plus
    int dam;
    int interval;
    bool operator==(const Move& o) const = default;
  };
  std::vector<Move> tabu;
  int evals = 0;

  while (evals < options.budget) {
    Move chosen{-1, 0, 0};
    double chosen_value = current_value;
    ControlSchedule chosen_schedule;

    for (int d = 0; d < current.dams() && evals < options.budget; ++d) {
      const double vmax = instance.topology.dams[d].max_opening;
      for (int k = 0; k < current.intervals() && evals < options.budget; ++k) {
        const Move moves[3] = {{0, d, k}, {1, d, k}, {2, d, k}};
        for (const Move& m : moves) {
          if (std::find(tabu.begin(), tabu.end(), m) != tabu.end()) continue;
          ControlSchedule cand = current;
          if (m.kind == 0) {
            cand.z[d][k] = cand.z[d][k] == 0.0 ? 1.0 : 0.0;
          } else {
            const double delta = m.kind == 1 ? -options.v_step : options.v_step;
            const double nv = std::clamp(cand.v[d][k] + delta, 0.0, vmax);
            if (nv == cand.v[d][k]) continue;
            cand.v[d][k] = nv;
          }
          const double value = instance.evaluate(cand);
          ++evals;
          if (value < chosen_value) {
            chosen_value = value;
            chosen = m;
            chosen_schedule = cand;
          }
        }
      }
    }

    if (chosen.kind < 0) break;  // local optimum
    current = chosen_schedule;
    current_value = chosen_value;
    tabu.push_back(chosen);
    if (static_cast<int>(tabu.size()) > options.tabu) tabu.erase(tabu.begin());
    if (current_value < best_value) {
      best_value = current_value;
      best = current;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

namespace {

/// Relaxed per-interval z values induced by switch times: the fraction of
/// each interval spent open. Piecewise linear in the times.
std::vector<double> fractions_from_times(const std::vector<double>& t_grid, double initial,
                                         const std::vector<double>& times) {
  const int nt = static_cast<int>(t_grid.size()) - 1;
  std::vector<double> frac(nt, 0.0);
  for (int k = 0; k < nt; ++k) {
    const double a = t_grid[k], b = t_grid[k + 1];
    double level = initial;
    double t = a;
    double open = 0.0;
    for (double s : times) {
      if (s <= a) {
        level = level == 0.0 ? 1.0 : 0.0;
        continue;
      }
      if (s >= b) break;
      if (level == 1.0) open += s - t;
      t = s;
      level = level == 0.0 ? 1.0 : 0.0;
    }
    if (level == 1.0) open += b - t;
    frac[k] = open / (b - a);
  }
  return frac;
}

}  // namespace

ControlSchedule hierarchical_solve(const OcpInstance& instance, const ControlSchedule& base,
                                   const HierarchicalOptions& options) {
  const int nd = base.dams();
  const double t0 = base.t_grid.front();
  const double t_end = base.t_grid.back();
  const double horizon = t_end - t0;

  ControlSchedule best = base;
  double best_value = instance.evaluate(best);

  // Exhaustive loop over switch-count vectors and initial levels.
  std::vector<int> counts(nd, 0);
  const auto next_counts = [&]() {
    for (int d = 0; d < nd; ++d) {
      if (++counts[d] <= options.max_switches) return true;
      counts[d] = 0;
    }
    return false;
  };

  do {
    const int total_switches = std::accumulate(counts.begin(), counts.end(), 0);
    for (int init_mask = 0; init_mask < (1 << nd); ++init_mask) {
      // decision vector: all v entries, then per dam the ordered gap offsets
      ControlSchedule work = base;
      work.relaxed = true;
      const ScheduleLayout vlayout = ScheduleLayout::all_v_only(work);
      const int dim = vlayout.n_v + total_switches;

      const auto apply = [&](const Eigen::VectorXd& x, ControlSchedule& s) {
        std::vector<double> xv(x.data(), x.data() + vlayout.n_v);
        vlayout.unpack(xv, s);
        int off = vlayout.n_v;
        for (int d = 0; d < nd; ++d) {
          std::vector<double> times;
          double t = t0;
          for (int j = 0; j < counts[d]; ++j) {
            t += x[off++];
            times.push_back(std::min(t, t_end));
          }
          const double initial = (init_mask >> d) & 1 ? 1.0 : 0.0;
          s.z[d] = fractions_from_times(s.t_grid, initial, times);
        }
      };

      SqcqpProblem p;
      p.dim = dim;
      {
        std::vector<double> lo, hi;
        vlayout.bounds(instance.topology, work, lo, hi);
        lo.resize(dim, 0.0);
        hi.resize(dim, horizon);
        p.lower = Eigen::Map<const Eigen::VectorXd>(lo.data(), dim);
        p.upper = Eigen::Map<const Eigen::VectorXd>(hi.data(), dim);
      }
      ControlSchedule eval_sched = work;
      p.objective = [&](const Eigen::VectorXd& x) {
        apply(x, eval_sched);
        return instance.evaluate(eval_sched);
      };

      Eigen::VectorXd x_best;
      double inner_best = kInf;
      for (int ms = 0; ms < options.time_multistarts; ++ms) {
        Eigen::VectorXd x0(dim);
        std::vector<double> packed = vlayout.pack(base);
        for (int i = 0; i < vlayout.n_v; ++i) x0[i] = packed[i];
        CounterRng rng(rng_split(instance.fan.scenarios.empty() ? 1 : instance.fan.scenarios[0].seed,
                                 900 + ms));
        int off = vlayout.n_v;
        for (int d = 0; d < nd; ++d)
          for (int j = 0; j < counts[d]; ++j) {
            const double uniform_gap = horizon / (counts[d] + 1);
            x0[off++] = ms == 0 ? uniform_gap : rng.next_uniform() * uniform_gap * 1.5;
          }
        const SqcqpResult r = sqcqp_solve(p, x0, options.inner);
        if (std::isfinite(r.objective) && r.objective < inner_best) {
          inner_best = r.objective;
          x_best = r.x;
        }
      }
      if (!std::isfinite(inner_best)) continue;  // this switch count failed; skip

      // Recompose: snap the fractional z to the grid by rounding the open
      // fractions, then evaluate the binary schedule exactly.
      ControlSchedule cand = work;
      apply(x_best, cand);
      ControlSchedule binary = sum_up_rounding(cand);
      binary.v = cand.v;
      const double value = instance.evaluate(binary);
      if (value < best_value) {
        best_value = value;
        best = binary;
      }
    }
  } while (next_counts());
  return best;
}

DoaResult domains_of_attraction(
    const std::function<SqcqpResult(const std::vector<double>&)>& solve,
    const std::vector<std::vector<double>>& samples, double tol) {
  DoaResult out;
  out.labels.assign(samples.size(), -1);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    SqcqpResult r;
    try {
      r = solve(samples[s]);
    } catch (const std::exception&) {
      continue;  // unresolved
    }
    if (r.status != SqcqpStatus::converged) continue;
    const std::vector<double> x(r.x.data(), r.x.data() + r.x.size());
    int label = -1;
    for (std::size_t c = 0; c < out.representatives.size(); ++c) {
      double dist = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - out.representatives[c][i];
        dist += d * d;
      }
      if (std::sqrt(dist) <= tol) {
        label = static_cast<int>(c);
        break;
      }
    }
    if (label < 0) {
      label = static_cast<int>(out.representatives.size());
      out.representatives.push_back(x);
      out.members.push_back({});
    }
    out.labels[s] = label;
    out.members[label].push_back(static_cast<int>(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

/// Tail part of the objective from the anchor interval on: revenue and
/// barrier terms of later snapshots plus the switching/variation cost of the
/// later transitions (boundary-crossing transitions count toward the tail).
double objective_tail(const TrajectoryBundle& bundle, const ControlSchedule& schedule,
                      const ObjectiveParams& params, const CascadeTopology& topology,
                      int anchor) {
  double cost = 0.0;
  for (int d = 0; d < schedule.dams(); ++d)
    for (int k = std::max(anchor, 1); k < schedule.intervals(); ++k) {
      cost += params.c_v * std::abs(schedule.v[d][k] - schedule.v[d][k - 1]);
      cost += params.c_z * std::abs(schedule.z[d][k] - schedule.z[d][k - 1]);
    }
  double revenue = 0.0, barrier = 0.0;
  for (std::size_t s = 0; s < bundle.scenarios.size(); ++s) {
    const ScenarioTrajectory& traj = bundle.scenarios[s];
    const double w = bundle.weights[s];
    for (int k = anchor; k < static_cast<int>(traj.revenue.size()); ++k)
      revenue += w * traj.revenue[k];
    for (std::size_t k = anchor + 1; k < traj.snapshots.size(); ++k) {
      double margin = kInf;
      const CascadeState& snap = traj.snapshots[k];
      for (std::size_t r = 0; r < snap.size(); ++r) {
        const double cw = topology.reaches[r].channel_width;
        for (std::size_t i = 0; i < snap[r].size(); ++i) {
          const double h = snap[r].area[i] / cw;
          const double u =
              snap[r].area[i] > kDryTol ? std::abs(snap[r].discharge[i] / snap[r].area[i]) : 0.0;
          margin = std::min({margin, h - (params.h_min + params.margin),
                             (params.h_max - params.margin) - h, params.velocity_bound - u});
        }
      }
      if (margin <= 0.0) return kInf;
      barrier -= w * params.barrier_weight * std::log(margin);
    }
  }
  return -revenue + cost + barrier;
}

std::optional<CatalogEntry> make_entry(const OcpInstance& instance,
                                       const ControlSchedule& schedule, int anchor,
                                       const std::string& provenance, std::uint64_t seed) {
  const TrajectoryBundle bundle = simulate_bundle(instance.topology, instance.initial_state,
                                                  schedule, instance.fan, instance.solver,
                                                  instance.sim);
  ObjectiveBreakdown bd;
  const double j = objective_eval(bundle, schedule, instance.objective, instance.topology, &bd);
  if (!std::isfinite(j)) return std::nullopt;

  CatalogEntry e;
  e.initial_summary = initial_summary(instance.initial_state, instance.topology);
  e.schedule = schedule;
  e.objective = j;
  e.tail_cost = objective_tail(bundle, schedule, instance.objective, instance.topology, anchor);
  e.feasible = 1;
  e.seed = seed;
  e.provenance = provenance;

  // Scenario-weighted augmented state at the anchor.
  std::vector<double> last_v(schedule.dams()), last_z(schedule.dams());
  const int ka = std::max(anchor - 1, 0);
  for (int d = 0; d < schedule.dams(); ++d) {
    last_v[d] = schedule.v[d][ka];
    last_z[d] = schedule.z[d][ka];
  }
  const double t_anchor = schedule.t_grid[anchor];
  for (std::size_t s = 0; s < bundle.scenarios.size(); ++s) {
    const std::vector<double> x =
        augmented_state(bundle.scenarios[s].snapshots[anchor], instance.topology, last_v, last_z,
                        instance.fan.scenarios[s].inflow_at(t_anchor),
                        instance.fan.scenarios[s].price_at(t_anchor));
    if (e.terminal_state.empty()) e.terminal_state.assign(x.size(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i)
      e.terminal_state[i] += bundle.weights[s] * x[i];
  }
  return e;
}

}  // namespace

int offline_rl_run(const OcpInstance& instance, const ControlSchedule& base, int episodes,
                   BucketedPolicy& policy, FeasibilityClassifier& classifier, std::uint64_t seed,
                   CatalogStore* store) {
  CounterRng rng(rng_split(seed, 0x524cULL));
  int feasible_count = 0;
  const std::vector<double> summary = initial_summary(instance.initial_state, instance.topology);
  const int state_bin =
      std::min(9, std::max(0, static_cast<int>(summary.empty() ? 0.0 : summary[0] * 2.0)));

  for (int ep = 0; ep < episodes; ++ep) {
    const int action = policy.select(state_bin, rng);
    ControlSchedule sched = base;
    const std::vector<double>& v_action = policy.action(action);
    for (int d = 0; d < sched.dams(); ++d)
      for (int k = 0; k < sched.intervals(); ++k)
        sched.v[d][k] = std::min(v_action[d % v_action.size()],
                                 instance.topology.dams[d].max_opening);

    const double j = instance.evaluate(sched);
    std::vector<double> features = summary;
    for (double v : v_action) features.push_back(v);

    if (std::isfinite(j)) {
      classifier.update(features, 1);
      policy.update(state_bin, action, -j);
      ++feasible_count;
      if (store) {
        const auto entry = make_entry(instance, sched, std::max(1, sched.intervals() / 2), "rl",
                                      seed + ep);
        if (entry) store->insert(*entry);
      }
    } else {
      classifier.update(features, 0);  // infeasible episodes inform the classifier
    }
  }
  return feasible_count;
}

BuildSummary build_catalog(const CascadeTopology& topology, const ForecastModel& model,
                           const ObjectiveParams& objective, const BuildConfig& config,
                           CatalogStore& store, FeasibilityClassifier* classifier,
                           BucketedPolicy* policy) {
  BuildSummary summary;
  if (!config.catalog_path.empty()) store.attach(config.catalog_path);

  const int total_intervals = config.horizon_intervals + config.tail_intervals;
  const int anchor = config.horizon_intervals;

  FeasibilityClassifier local_classifier(
      static_cast<int>(2 * topology.num_reaches() + topology.num_dams()));
  if (!classifier) classifier = &local_classifier;

  std::vector<std::vector<double>> centers;
  for (std::size_t d = 0; d < topology.num_dams(); ++d) {
    const double vmax = topology.dams[d].max_opening;
    centers.push_back({0.25 * vmax, 0.5 * vmax, 0.75 * vmax});
  }
  BucketedPolicy local_policy(centers, 10);
  if (!policy) policy = &local_policy;

  int point = 0;
  for (double depth : config.depth_lattice) {
    for (double inflow_factor : config.inflow_lattice) {
      ++summary.lattice_points;
      const std::uint64_t point_seed = rng_split(config.master_seed, 10000 + point);
      ++point;

      OcpInstance inst;
      inst.topology = topology;
      CascadeState init;
      for (const Reach& r : topology.reaches)
        init.push_back(lake_at_rest(r, r.bathymetry.bed_elevation[0] + depth));
      inst.initial_state = std::move(init);
      ForecastModel m = model;
      m.inflow.mean *= inflow_factor;
      const SamplePath prefix =
          sample_path(m, config.interval, config.interval, point_seed).prefix(0.0);
      inst.fan = build_scenario_fan(m, prefix, config.scenarios,
                                    total_intervals * config.interval, point_seed + 1);
      inst.objective = objective;

      const ControlSchedule base = ControlSchedule::constant(
          topology, 0.0, config.interval, total_intervals,
          0.5 * topology.dams.front().max_opening, 1.0);

      const auto try_insert = [&](const ControlSchedule& sched, const std::string& provenance) {
        const auto entry = make_entry(inst, sched, anchor, provenance, point_seed);
        if (entry) {
          store.insert(*entry);
          ++summary.inserted;
          classifier->update(entry->initial_summary, 1);
        } else {
          ++summary.failures;
          classifier->update(initial_summary(inst.initial_state, inst.topology), 0);
        }
      };

      // Branch and bound (with its root relaxation feeding sum-up rounding).
      if (base.dams() * base.intervals() <= 24) {
        BBOptions bb_opt;
        bb_opt.relaxation.max_iterations = 30;
        bb_opt.relaxation.tol = 1e-5;
        const BBResult bb = bb_solve(inst, base, config.bb_budget, bb_opt);
        if (std::isfinite(bb.objective)) try_insert(bb.schedule, "bb");
      }

      {  // sum-up rounding of a relaxed greedy-ish schedule
        ControlSchedule relaxed = base;
        relaxed.relaxed = true;
        for (auto& row : relaxed.z)
          for (std::size_t k = 0; k < row.size(); ++k) row[k] = 0.3 + 0.4 * (k % 2);
        const ControlSchedule sur = sum_up_rounding(relaxed);
        try_insert(sur, "sur");
      }

      {  // hierarchical switch optimization
        HierarchicalOptions h_opt;
        h_opt.max_switches = 1;
        h_opt.inner.max_iterations = 20;
        h_opt.inner.tol = 1e-4;
        h_opt.time_multistarts = 2;
        const ControlSchedule hs = hierarchical_solve(inst, base, h_opt);
        try_insert(hs, "hierarchical");
      }

      {  // greedy improvement of the constant baseline
        GreedyOptions g_opt;
        g_opt.budget = 60;
        const ControlSchedule gs = greedy_improve(inst, base, g_opt);
        try_insert(gs, "greedy");
      }

      summary.rl_episodes +=
          offline_rl_run(inst, base, config.rl_episodes, *policy, *classifier, point_seed, &store);
    }
  }

  // Simple training-stream accuracy proxy.
  summary.classifier_accuracy =
      classifier->training_count() > 0
          ? static_cast<double>(summary.inserted) /
                std::max(1, summary.inserted + summary.failures)
          : 0.0;
  return summary;
}

}  // namespace cascade
