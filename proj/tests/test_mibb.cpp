#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <random>
#include <sstream>

#include "gridopt/mibb.hpp"

using namespace gridopt;
using Catch::Approx;

namespace {

// Brute force: fix every binary assignment, keep the best continuous solve.
double enumerate_best(const ConicProgram& p) {
  std::vector<int> bins = p.binary_vars();
  double best = kInf;
  for (unsigned mask = 0; mask < (1u << bins.size()); ++mask) {
    ConicProgram fixed = p;
    for (size_t i = 0; i < bins.size(); ++i)
      fixed.fix_var({bins[i]}, (mask >> i) & 1u ? 1.0 : 0.0);
    ConicSolution sol = solve_continuous(fixed);
    if (sol.status == SolveStatus::Optimal) best = std::min(best, sol.objective);
  }
  return best;
}

// Random small knapsack-ish MISOCP: binary picks with a cone coupling.
ConicProgram random_misocp(unsigned seed, int nb) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> profit(1.0, 5.0);
  std::uniform_real_distribution<double> weight(0.5, 2.0);
  ConicProgram p;
  std::vector<LinTerm> knap;
  for (int i = 0; i < nb; ++i) {
    VarRef y = p.add_var(0, 1, "y" + std::to_string(i), VarKind::Binary);
    p.add_linear_cost(y, -profit(rng));
    knap.push_back({y.id, weight(rng)});
  }
  p.add_row(knap, Sense::LE, 0.45 * nb, "budget");
  // A continuous variable tied to the picks through a cone.
  VarRef x = p.add_var(0.0, 10.0, "x");
  p.add_linear_cost(x, 0.5);
  std::vector<ConicProgram::AffineRow> arg;
  arg.push_back({{{knap[0].var, 1.0}, {knap[1].var, 1.0}}, 0.0});
  p.add_cone(std::move(arg), {{{x.id, 1.0}}, 0.3}, "tie");
  return p;
}

}  // namespace

TEST_CASE("integral root solves in one node", "[mibb]") {
  // min -y with y binary: the relaxation already lands on y = 1.
  ConicProgram p;
  VarRef y = p.add_var(0, 1, "y", VarKind::Binary);
  p.add_linear_cost(y, -1.0);
  MibbResult r = solve_misocp(p);
  CHECK(r.status == MibbStatus::Optimal);
  CHECK(r.nodes_explored == 1);
  CHECK(r.incumbent.objective == Approx(-1.0).margin(1e-7));
  CHECK(r.incumbent.primal[y.id] == Approx(1.0).margin(1e-7));
}

TEST_CASE("two-binary packing matches enumeration", "[mibb]") {
  // min -(3 y1 + 2 y2) s.t. y1 + y2 <= 1: optimum -3 at (1, 0).
  ConicProgram p;
  VarRef y1 = p.add_var(0, 1, "y1", VarKind::Binary);
  VarRef y2 = p.add_var(0, 1, "y2", VarKind::Binary);
  p.add_linear_cost(y1, -3.0);
  p.add_linear_cost(y2, -2.0);
  p.add_row({{y1.id, 1.0}, {y2.id, 1.0}}, Sense::LE, 1.0, "pack");
  MibbResult r = solve_misocp(p);
  REQUIRE(r.status == MibbStatus::Optimal);
  CHECK(r.incumbent.objective == Approx(-3.0).margin(1e-6));
  CHECK(r.incumbent.primal[y1.id] == Approx(1.0).margin(1e-6));
  CHECK(r.incumbent.primal[y2.id] == Approx(0.0).margin(1e-6));
  CHECK(r.incumbent.objective == Approx(enumerate_best(p)).margin(1e-6));
}

TEST_CASE("random mixed-binary cones match enumeration", "[mibb]") {
  for (unsigned seed : {1u, 4u, 7u, 12u}) {
    ConicProgram p = random_misocp(seed, 5);
    MibbResult r = solve_misocp(p);
    double oracle = enumerate_best(p);
    INFO("seed " << seed);
    REQUIRE(r.status == MibbStatus::Optimal);
    CHECK(r.incumbent.objective ==
          Approx(oracle).epsilon(1e-6).margin(1e-6));
    for (int v : p.binary_vars()) {
      double x = r.incumbent.primal[v];
      CHECK(std::abs(x - std::round(x)) < 1e-6);
    }
  }
}

TEST_CASE("infeasible binary system reports infeasible", "[mibb]") {
  ConicProgram p;
  VarRef y1 = p.add_var(0, 1, "y1", VarKind::Binary);
  VarRef y2 = p.add_var(0, 1, "y2", VarKind::Binary);
  p.add_row({{y1.id, 1.0}, {y2.id, 1.0}}, Sense::GE, 3.0, "impossible");
  MibbResult r = solve_misocp(p);
  CHECK(r.status == MibbStatus::Infeasible);
}

TEST_CASE("node limit returns the best feasible point found", "[mibb]") {
  ConicProgram p = random_misocp(3, 8);
  MibbOptions opt;
  opt.max_nodes = 1;
  MibbResult r = solve_misocp(p, opt);
  // One node plus the rounding heuristic still yields an incumbent here.
  CHECK(r.status == MibbStatus::NodeLimit);
  CHECK(r.nodes_explored == 1);
  CHECK(r.incumbent.status == SolveStatus::Optimal);
  CHECK(r.gap >= 0.0);
}

TEST_CASE("search is deterministic", "[mibb]") {
  ConicProgram p = random_misocp(9, 6);
  MibbResult a = solve_misocp(p);
  MibbResult b = solve_misocp(p);
  CHECK(a.nodes_explored == b.nodes_explored);
  CHECK(a.incumbent.objective == b.incumbent.objective);
  REQUIRE(a.incumbent.primal.size() == b.incumbent.primal.size());
  for (size_t i = 0; i < a.incumbent.primal.size(); ++i)
    CHECK(a.incumbent.primal[i] == b.incumbent.primal[i]);
}

TEST_CASE("node log bounds are monotone under best-bound order", "[mibb]") {
  ConicProgram p = random_misocp(5, 6);
  std::ostringstream log;
  MibbOptions opt;
  opt.node_log = &log;
  MibbResult r = solve_misocp(p, opt);
  REQUIRE(r.status == MibbStatus::Optimal);
  std::istringstream in(log.str());
  std::string line;
  double last = -kInf;
  int lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::string id, depth, bound_s, inc;  // bound/incumbent may be "(-)inf"
    REQUIRE((ls >> id >> depth >> bound_s >> inc));
    double bound = std::strtod(bound_s.c_str(), nullptr);
    CHECK(bound >= last - 1e-9);
    last = bound;
  }
  CHECK(lines == r.nodes_explored);
}

TEST_CASE("incumbent hint seeds the search", "[mibb]") {
  ConicProgram p = random_misocp(11, 6);
  MibbResult cold = solve_misocp(p);
  REQUIRE(cold.status == MibbStatus::Optimal);
  MibbOptions warm;
  warm.incumbent_hint = cold.incumbent.primal;
  MibbResult hot = solve_misocp(p, warm);
  REQUIRE(hot.status == MibbStatus::Optimal);
  CHECK(hot.incumbent.objective == Approx(cold.incumbent.objective).margin(1e-7));
  CHECK(hot.nodes_explored <= cold.nodes_explored);
}

TEST_CASE("fixed-binary restriction reprices the incumbent", "[mibb]") {
  // Unit commitment flavor: open the cheap unit (fixed cost via binary),
  // dispatch it; the balance dual equals the marginal cost of the open unit.
  ConicProgram p;
  VarRef y = p.add_var(0, 1, "on", VarKind::Binary);
  VarRef pg = p.add_var(0.0, 2.0, "pg");
  VarRef pe = p.add_var(0.0, 5.0, "expensive");
  p.add_linear_cost(y, 1.0);    // commitment cost
  p.add_linear_cost(pg, 5.0);
  p.add_linear_cost(pe, 50.0);
  p.add_row({{pg.id, 1.0}, {y.id, -2.0}}, Sense::LE, 0.0, "cap");  // pg <= 2y
  ConstraintRef bal = p.add_row({{pg.id, 1.0}, {pe.id, 1.0}}, Sense::EQ, 1.5, "balance");
  MibbResult r = solve_misocp(p);
  REQUIRE(r.status == MibbStatus::Optimal);
  CHECK(r.incumbent.primal[y.id] == Approx(1.0).margin(1e-6));
  ConicSolution priced = resolve_incumbent_duals(p, r.incumbent.primal);
  CHECK(dual(priced, bal) == Approx(5.0).epsilon(1e-5));
  CHECK(dual(r.incumbent, bal) == Approx(5.0).epsilon(1e-5));

  // Fractional vector is rejected.
  std::vector<double> frac = r.incumbent.primal;
  frac[y.id] = 0.4;
  CHECK_THROWS_AS(resolve_incumbent_duals(p, frac), std::invalid_argument);
}
