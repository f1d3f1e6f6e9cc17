// Branch and bound for mixed-binary SOCPs on top of the continuous solver.
// Deterministic: best-bound node selection with node-id tie break, most-
// fractional branching with lowest-index tie break, children fix 0 then 1.
#pragma once

#include <chrono>
#include <cstdint>
#include <ostream>
#include <queue>
#include <set>

#include "gridopt/ipm.hpp"

namespace gridopt {

enum class MibbStatus { Optimal, FeasibleGap, Infeasible, NodeLimit, TimeLimit };

inline const char* to_string(MibbStatus s) {
  switch (s) {
    case MibbStatus::Optimal: return "optimal";
    case MibbStatus::FeasibleGap: return "feasible_gap";
    case MibbStatus::Infeasible: return "infeasible";
    case MibbStatus::NodeLimit: return "node_limit";
    case MibbStatus::TimeLimit: return "time_limit";
  }
  return "?";
}

struct MibbOptions {
  double rel_gap = 1e-6;
  double abs_gap = 1e-8;
  std::int64_t max_nodes = 1'000'000'000;
  double time_limit = kInf;  // seconds
  SolveOptions node_options;
  SocpBackend* backend = nullptr;
  std::ostream* node_log = nullptr;  // CSV: node,depth,bound,incumbent
  // Warm start: a primal vector whose binary entries seed the incumbent
  // (used when sweeping a budget, where looser budgets accept tighter plans).
  std::vector<double> incumbent_hint;
};

struct MibbResult {
  MibbStatus status = MibbStatus::Infeasible;
  ConicSolution incumbent;  // duals come from the fixed-binary restriction
  double best_bound = -kInf;
  double gap = kInf;
  std::int64_t nodes_explored = 0;
};

// Continuous restriction with binaries pinned to the given primal's values.
inline ConicSolution resolve_incumbent_duals(const ConicProgram& p,
                                             const std::vector<double>& primal,
                                             const SolveOptions& so = {},
                                             SocpBackend* backend = nullptr) {
  ConicProgram fixed = p;
  for (int v : p.binary_vars()) {
    double val = std::round(primal[v]);
    if (std::abs(primal[v] - val) > 1e-4)
      throw std::invalid_argument("incumbent binary " + std::to_string(v) + " is fractional");
    fixed.fix_var({v}, val);
  }
  ConicSolution sol = solve_continuous(fixed, so, backend);
  if (sol.status != SolveStatus::Optimal)
    throw std::runtime_error(std::string("fixed-binary restriction did not solve: ") +
                             to_string(sol.status));
  return sol;
}

inline MibbResult solve_misocp(const ConicProgram& prog, const MibbOptions& opt = {}) {
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };
  const std::vector<int> bins = prog.binary_vars();
  const double int_tol = 1e-6;

  MibbResult res;
  bool have_incumbent = false;
  double inc_obj = kInf;

  auto node_solve = [&](const std::vector<std::pair<int, double>>& fixings) {
    ConicProgram relax = prog;
    for (auto [v, val] : fixings) relax.fix_var({v}, val);
    SolveOptions so = opt.node_options;
    if (std::isfinite(opt.time_limit))
      so.time_limit = std::max(0.0, opt.time_limit - elapsed());
    return solve_continuous(relax, so, opt.backend);
  };

  std::set<std::string> tried;  // memo over rounded assignments
  auto try_incumbent = [&](const std::vector<double>& primal) {
    std::vector<std::pair<int, double>> fixings;
    std::string key(bins.size(), '0');
    fixings.reserve(bins.size());
    for (size_t i = 0; i < bins.size(); ++i) {
      double val = std::round(primal[bins[i]]);
      fixings.emplace_back(bins[i], val);
      if (val > 0.5) key[i] = '1';
    }
    if (!tried.insert(key).second) return;
    ConicSolution fixed = node_solve(fixings);
    if (fixed.status == SolveStatus::Optimal && fixed.objective < inc_obj - opt.abs_gap) {
      inc_obj = fixed.objective;
      res.incumbent = std::move(fixed);
      have_incumbent = true;
    }
  };

  if (opt.incumbent_hint.size() == static_cast<size_t>(prog.n_vars()))
    try_incumbent(opt.incumbent_hint);

  struct Node {
    double bound;
    std::int64_t id;
    int depth;
    std::vector<std::pair<int, double>> fixings;
  };
  struct ByBound {
    bool operator()(const Node& a, const Node& b) const {
      if (a.bound != b.bound) return a.bound > b.bound;  // min-heap on bound
      return a.id > b.id;                                // then oldest first
    }
  };
  std::priority_queue<Node, std::vector<Node>, ByBound> open;
  std::int64_t next_id = 0;
  open.push({-kInf, next_id++, 0, {}});

  bool hit_node_limit = false, hit_time_limit = false, root_infeasible = false;

  while (!open.empty()) {
    if (res.nodes_explored >= opt.max_nodes) {
      hit_node_limit = true;
      break;
    }
    if (elapsed() > opt.time_limit) {
      hit_time_limit = true;
      break;
    }
    Node node = open.top();
    open.pop();
    // Best-bound order makes the popped bound the global lower bound.
    if (node.bound > -kInf) res.best_bound = std::max(res.best_bound, node.bound);
    if (have_incumbent) {
      double gap = (inc_obj - res.best_bound) / std::max(1.0, std::abs(inc_obj));
      if (node.bound >= inc_obj - opt.abs_gap || gap <= opt.rel_gap) break;
    }

    ++res.nodes_explored;
    ConicSolution relax = node_solve(node.fixings);
    if (opt.node_log)
      (*opt.node_log) << node.id << ',' << node.depth << ',' << node.bound << ','
                      << (have_incumbent ? inc_obj : kInf) << '\n';
    if (relax.status == SolveStatus::Infeasible) {
      if (node.id == 0) root_infeasible = true;
      continue;
    }
    if (relax.status == SolveStatus::Unbounded)
      throw std::runtime_error("node relaxation unbounded: add variable bounds");

    double node_bound = node.bound;
    bool have_relax = relax.status == SolveStatus::Optimal;
    if (have_relax) node_bound = std::max(node_bound, relax.objective);

    if (have_relax && have_incumbent && node_bound >= inc_obj - opt.abs_gap) continue;

    // Integral relaxation: accept via a clean fixed re-solve (duals included).
    if (have_relax) {
      bool integral = true;
      for (int v : bins)
        if (std::abs(relax.primal[v] - std::round(relax.primal[v])) > int_tol) {
          integral = false;
          break;
        }
      if (integral) {
        try_incumbent(relax.primal);
        // The pinned re-solve can fail on degenerate restrictions; the node
        // relaxation is then itself the certificate for this assignment.
        if (relax.objective < inc_obj - opt.abs_gap) {
          inc_obj = relax.objective;
          res.incumbent = std::move(relax);
          have_incumbent = true;
        }
        continue;
      }
      // Rounding heuristic.
      try_incumbent(relax.primal);
    }

    // Branch: most fractional first, lowest index on ties.
    int branch_var = -1;
    double best_frac = -1.0;
    if (have_relax) {
      for (int v : bins) {
        double x = relax.primal[v];
        double score = std::min(x, 1.0 - x);  // distance to the nearer bound
        if (score > best_frac + 1e-12) {
          best_frac = score;
          branch_var = v;
        }
      }
    } else {
      // Relaxation failed numerically: branch blindly on the first free binary.
      for (int v : bins) {
        bool fixed = false;
        for (auto [fv, _] : node.fixings) fixed |= (fv == v);
        if (!fixed) {
          branch_var = v;
          break;
        }
      }
    }
    if (branch_var < 0) continue;  // nothing left to branch on

    for (double val : {0.0, 1.0}) {
      Node child;
      child.bound = node_bound;
      child.id = next_id++;
      child.depth = node.depth + 1;
      child.fixings = node.fixings;
      child.fixings.emplace_back(branch_var, val);
      open.push(std::move(child));
    }
  }

  if (have_incumbent) {
    if (open.empty() || res.best_bound >= inc_obj - opt.abs_gap) res.best_bound = inc_obj;
    res.gap = (inc_obj - res.best_bound) / std::max(1.0, std::abs(inc_obj));
    if (hit_node_limit) res.status = MibbStatus::NodeLimit;
    else if (hit_time_limit) res.status = MibbStatus::TimeLimit;
    else if (res.gap <= opt.rel_gap) res.status = MibbStatus::Optimal;
    else res.status = MibbStatus::FeasibleGap;
  } else {
    if (hit_node_limit) res.status = MibbStatus::NodeLimit;
    else if (hit_time_limit) res.status = MibbStatus::TimeLimit;
    else res.status = MibbStatus::Infeasible;
    (void)root_infeasible;
  }
  return res;
}

}  // namespace gridopt
