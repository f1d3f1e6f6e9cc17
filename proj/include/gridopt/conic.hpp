// Conic-program IR: variables, linear rows, second-order cones, diagonal
// quadratic objective, plus the pluggable continuous-solver interface.
#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridopt {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct VarRef {
  int id = -1;
  bool valid() const { return id >= 0; }
};

struct ConstraintRef {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class VarKind { Continuous, Binary };
enum class Sense { LE, EQ, GE };

struct LinTerm {
  int var;
  double coef;
};

// Objective form: sum_i q2[i] x_i^2 + q1[i] x_i + q0 (q2 >= 0 keeps it convex).
// Linear rows: sum_j a_j x_j {<=,=,>=} rhs.
// Cones: || arg rows ||_2 <= head, every row affine in x.
struct ConicProgram {
  struct Row {
    std::vector<LinTerm> terms;
    Sense sense = Sense::EQ;
    double rhs = 0.0;
    std::string name;
  };
  struct AffineRow {
    std::vector<LinTerm> terms;
    double offset = 0.0;
  };
  struct Cone {
    std::vector<AffineRow> arg;  // the vector inside the norm
    AffineRow head;              // the bounding affine expression
    std::string name;
  };

  std::vector<double> lb, ub;
  std::vector<VarKind> kind;
  std::vector<std::string> var_name;
  std::vector<double> q2, q1;
  double q0 = 0.0;
  std::vector<Row> rows;
  std::vector<Cone> cones;
  // Constraint handles are dense across rows and cones in add order.
  std::vector<std::pair<bool, int>> handles;  // (is_cone, index within its list)

  int n_vars() const { return static_cast<int>(lb.size()); }
  int n_rows() const { return static_cast<int>(rows.size()); }
  int n_cones() const { return static_cast<int>(cones.size()); }
  int n_constraints() const { return static_cast<int>(handles.size()); }

  VarRef add_var(double lo, double hi, std::string name = "",
                 VarKind k = VarKind::Continuous) {
    if (lo > hi) throw std::invalid_argument("variable '" + name + "': lb > ub");
    if (k == VarKind::Binary && (lo < 0.0 || hi > 1.0))
      throw std::invalid_argument("binary variable '" + name + "': bounds outside [0,1]");
    lb.push_back(lo);
    ub.push_back(hi);
    kind.push_back(k);
    var_name.push_back(std::move(name));
    q2.push_back(0.0);
    q1.push_back(0.0);
    return {n_vars() - 1};
  }

  void check_var(VarRef v) const {
    if (v.id < 0 || v.id >= n_vars())
      throw std::invalid_argument("bad variable handle " + std::to_string(v.id));
  }

  void add_linear_cost(VarRef v, double c) {
    check_var(v);
    q1[v.id] += c;
  }
  void add_quad_cost(VarRef v, double c) {
    check_var(v);
    if (c < 0) throw std::invalid_argument("negative quadratic cost breaks convexity");
    q2[v.id] += c;
  }

  ConstraintRef add_row(std::vector<LinTerm> terms, Sense sense, double rhs,
                        std::string name = "") {
    for (const LinTerm& t : terms) check_var({t.var});
    rows.push_back({std::move(terms), sense, rhs, std::move(name)});
    handles.emplace_back(false, n_rows() - 1);
    return {n_constraints() - 1};
  }

  ConstraintRef add_cone(std::vector<AffineRow> arg, AffineRow head, std::string name = "") {
    if (arg.empty()) throw std::invalid_argument("cone '" + name + "' needs at least one row");
    for (const AffineRow& r : arg)
      for (const LinTerm& t : r.terms) check_var({t.var});
    for (const LinTerm& t : head.terms) check_var({t.var});
    cones.push_back({std::move(arg), std::move(head), std::move(name)});
    handles.emplace_back(true, n_cones() - 1);
    return {n_constraints() - 1};
  }

  void fix_var(VarRef v, double value) {
    check_var(v);
    lb[v.id] = value;
    ub[v.id] = value;
  }

  std::vector<int> binary_vars() const {
    std::vector<int> out;
    for (int i = 0; i < n_vars(); ++i)
      if (kind[i] == VarKind::Binary) out.push_back(i);
    return out;
  }

  bool has_quadratic_cost() const {
    for (double q : q2)
      if (q != 0.0) return true;
    return false;
  }

  double eval_objective(const std::vector<double>& x) const {
    double v = q0;
    for (int i = 0; i < n_vars(); ++i) v += q2[i] * x[i] * x[i] + q1[i] * x[i];
    return v;
  }

  double eval_affine(const AffineRow& r, const std::vector<double>& x) const {
    double v = r.offset;
    for (const LinTerm& t : r.terms) v += t.coef * x[t.var];
    return v;
  }

  double eval_row(const Row& r, const std::vector<double>& x) const {
    double v = 0.0;
    for (const LinTerm& t : r.terms) v += t.coef * x[t.var];
    return v;
  }

  // Worst violation over rows, cones, and bounds; 0 means feasible.
  double max_violation(const std::vector<double>& x) const {
    double worst = 0.0;
    for (int i = 0; i < n_vars(); ++i) {
      worst = std::max(worst, lb[i] - x[i]);
      worst = std::max(worst, x[i] - ub[i]);
    }
    for (const Row& r : rows) {
      double v = eval_row(r, x);
      if (r.sense == Sense::LE) worst = std::max(worst, v - r.rhs);
      else if (r.sense == Sense::GE) worst = std::max(worst, r.rhs - v);
      else worst = std::max(worst, std::abs(v - r.rhs));
    }
    for (const Cone& c : cones) {
      double norm2 = 0.0;
      for (const AffineRow& r : c.arg) {
        double v = eval_affine(r, x);
        norm2 += v * v;
      }
      worst = std::max(worst, std::sqrt(norm2) - eval_affine(c.head, x));
    }
    return worst;
  }
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, TimeLimit, NumericalError };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::TimeLimit: return "time_limit";
    case SolveStatus::NumericalError: return "numerical_error";
  }
  return "?";
}

struct ConicSolution {
  SolveStatus status = SolveStatus::NumericalError;
  std::vector<double> primal;  // per variable
  std::vector<double> duals;   // per constraint handle; cones report the head multiplier
  double objective = std::numeric_limits<double>::quiet_NaN();
  double solve_time = 0.0;
  int iterations = 0;
  std::string message;
};

inline double value(const ConicSolution& sol, VarRef v) {
  if (v.id < 0 || v.id >= static_cast<int>(sol.primal.size()))
    throw std::invalid_argument("bad variable handle " + std::to_string(v.id));
  return sol.primal[v.id];
}

// Sign convention: equality dual is the shadow price d(objective)/d(rhs);
// <= and >= rows report their nonnegative multipliers; cones report the
// multiplier on the head expression (also nonnegative).
inline double dual(const ConicSolution& sol, ConstraintRef c) {
  if (c.id < 0 || c.id >= static_cast<int>(sol.duals.size()))
    throw std::invalid_argument("bad constraint handle " + std::to_string(c.id));
  return sol.duals[c.id];
}

struct SolveOptions {
  double feas_tol = 1e-8;
  double time_limit = kInf;  // seconds
  int max_iters = 200;
  bool verbose = false;
};

class SocpBackend {
 public:
  virtual ~SocpBackend() = default;
  virtual std::string name() const = 0;
  // Integrality is ignored: binaries are solved as continuous within bounds.
  virtual ConicSolution solve(const ConicProgram& p, const SolveOptions& opt) = 0;
};

// Rewrites each diagonal quadratic objective term q*x^2 as an epigraph
// variable t with the cone ||(2*sqrt(q)*x, t-1)|| <= t+1, i.e. q*x^2 <= t.
// Appends variables and cones only: existing handles stay valid.
inline ConicProgram quadratic_to_socp(const ConicProgram& p) {
  if (!p.has_quadratic_cost()) return p;
  ConicProgram out = p;
  int n = p.n_vars();
  for (int i = 0; i < n; ++i) {
    if (p.q2[i] == 0.0) continue;
    VarRef t = out.add_var(0.0, kInf, "epi:" + p.var_name[i]);
    double s = 2.0 * std::sqrt(p.q2[i]);
    out.add_cone({{{{i, s}}, 0.0}, {{{t.id, 1.0}}, -1.0}}, {{{t.id, 1.0}}, 1.0},
                 "epi:" + p.var_name[i]);
    out.q2[i] = 0.0;
    out.q1[t.id] = 1.0;
  }
  return out;
}

inline std::string program_to_text(const ConicProgram& p) {
  std::ostringstream os;
  os << "vars " << p.n_vars() << " rows " << p.n_rows() << " cones " << p.n_cones() << "\n";
  os << "min ";
  bool first = true;
  for (int i = 0; i < p.n_vars(); ++i) {
    if (p.q2[i] != 0.0) {
      os << (first ? "" : " + ") << p.q2[i] << "*" << p.var_name[i] << "^2";
      first = false;
    }
    if (p.q1[i] != 0.0) {
      os << (first ? "" : " + ") << p.q1[i] << "*" << p.var_name[i];
      first = false;
    }
  }
  if (p.q0 != 0.0 || first) os << (first ? "" : " + ") << p.q0;
  os << "\n";
  for (int i = 0; i < p.n_vars(); ++i) {
    os << p.lb[i] << " <= " << p.var_name[i] << " <= " << p.ub[i];
    if (p.kind[i] == VarKind::Binary) os << " binary";
    os << "\n";
  }
  auto put_terms = [&](const std::vector<LinTerm>& terms) {
    bool f = true;
    for (const LinTerm& t : terms) {
      os << (f ? "" : " + ") << t.coef << "*" << p.var_name[t.var];
      f = false;
    }
    if (f) os << "0";
  };
  for (const auto& r : p.rows) {
    os << r.name << ": ";
    put_terms(r.terms);
    os << (r.sense == Sense::LE ? " <= " : r.sense == Sense::GE ? " >= " : " = ") << r.rhs << "\n";
  }
  for (const auto& c : p.cones) {
    os << c.name << ": ||";
    for (size_t k = 0; k < c.arg.size(); ++k) {
      if (k) os << "; ";
      put_terms(c.arg[k].terms);
      if (c.arg[k].offset != 0.0) os << " + " << c.arg[k].offset;
    }
    os << "|| <= ";
    put_terms(c.head.terms);
    if (c.head.offset != 0.0) os << " + " << c.head.offset;
    os << "\n";
  }
  return os.str();
}

// solve_continuous lives in ipm.hpp next to the default backend.

}  // namespace gridopt
