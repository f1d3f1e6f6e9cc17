// Dense two-phase simplex with Bland's rule. Reference LP backend for tests:
// exact vertex solutions and duals to cross-check the interior-point code.
#pragma once

#include <Eigen/Dense>
#include <chrono>

#include "gridopt/conic.hpp"

namespace gridopt {

class SimplexBackend : public SocpBackend {
 public:
  std::string name() const override { return "dense-simplex"; }

  ConicSolution solve(const ConicProgram& p, const SolveOptions& opt) override {
    auto t0 = std::chrono::steady_clock::now();
    ConicSolution sol;
    if (!p.cones.empty() || p.has_quadratic_cost()) {
      sol.status = SolveStatus::NumericalError;
      sol.message = "dense-simplex handles pure LPs only";
      return sol;
    }

    // Standard form: split free/shifted variables so everything is >= 0,
    // add slacks for inequalities.  x_orig = xp - xn (or shifted by lb).
    // Column layout per original variable:
    //   finite lb:            one column, value = x - lb
    //   finite ub only:       one column, value = ub - x
    //   free:                 two columns xp, xn
    // Finite ub with finite lb adds a slack row x_shift + s = ub - lb.
    int n = p.n_vars();
    std::vector<int> col_of(n, -1), neg_col_of(n, -1);
    std::vector<double> shift(n, 0.0);
    std::vector<int> flip(n, 1);
    int ncols = 0;
    for (int i = 0; i < n; ++i) {
      bool flb = std::isfinite(p.lb[i]), fub = std::isfinite(p.ub[i]);
      if (flb) {
        col_of[i] = ncols++;
        shift[i] = p.lb[i];
      } else if (fub) {
        col_of[i] = ncols++;
        shift[i] = p.ub[i];
        flip[i] = -1;
      } else {
        col_of[i] = ncols++;
        neg_col_of[i] = ncols++;
      }
    }

    struct DenseRow {
      Eigen::VectorXd a;
      double b;
      Sense sense;
      int source;  // constraint handle, or -1 for bound rows
    };
    std::vector<DenseRow> drows;
    auto expand = [&](const std::vector<LinTerm>& terms) {
      Eigen::VectorXd a = Eigen::VectorXd::Zero(ncols);
      double off = 0.0;
      for (const LinTerm& t : terms) {
        a[col_of[t.var]] += t.coef * flip[t.var];
        if (neg_col_of[t.var] >= 0) a[neg_col_of[t.var]] -= t.coef;
        off += t.coef * shift[t.var];
      }
      return std::make_pair(a, off);
    };

    for (int k = 0; k < p.n_constraints(); ++k) {
      const auto& [is_cone, idx] = p.handles[k];
      if (is_cone) continue;
      const auto& r = p.rows[idx];
      auto [a, off] = expand(r.terms);
      drows.push_back({a, r.rhs - off, r.sense, k});
    }
    for (int i = 0; i < n; ++i) {
      bool flb = std::isfinite(p.lb[i]), fub = std::isfinite(p.ub[i]);
      if (flb && fub && p.ub[i] > p.lb[i]) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(ncols);
        a[col_of[i]] = 1.0;
        drows.push_back({a, p.ub[i] - p.lb[i], Sense::LE, -1});
      }
      // lb == ub: variable fixed at zero in shifted space; no row needed.
    }

    // Add slack columns, build equality system Ax = b, x >= 0.
    int m = static_cast<int>(drows.size());
    int nslack = 0;
    for (const auto& r : drows)
      if (r.sense != Sense::EQ) ++nslack;
    int N = ncols + nslack;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, N);
    Eigen::VectorXd b(m);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(N);
    std::vector<int> slack_col(m, -1);
    {
      int sc = ncols;
      for (int r = 0; r < m; ++r) {
        A.row(r).head(ncols) = drows[r].a;
        b[r] = drows[r].b;
        if (drows[r].sense == Sense::LE) {
          A(r, sc) = 1.0;
          slack_col[r] = sc++;
        } else if (drows[r].sense == Sense::GE) {
          A(r, sc) = -1.0;
          slack_col[r] = sc++;
        }
      }
    }
    double cost_shift = p.q0;
    for (int i = 0; i < n; ++i) {
      c[col_of[i]] += p.q1[i] * flip[i];
      if (neg_col_of[i] >= 0) c[neg_col_of[i]] -= p.q1[i];
      cost_shift += p.q1[i] * shift[i];
    }
    std::vector<double> rowsign(m, 1.0);
    for (int r = 0; r < m; ++r)
      if (b[r] < 0) {
        A.row(r) *= -1;
        b[r] *= -1;
        rowsign[r] = -1.0;
      }

    // Phase 1: artificial basis.
    Eigen::MatrixXd T(m, N + m);
    T << A, Eigen::MatrixXd::Identity(m, m);
    std::vector<int> basis(m);
    for (int r = 0; r < m; ++r) basis[r] = N + r;
    Eigen::VectorXd c1 = Eigen::VectorXd::Zero(N + m);
    c1.tail(m).setOnes();
    Eigen::VectorXd xb = b;
    if (!run_simplex(T, xb, basis, c1, N + m)) {
      sol.status = SolveStatus::NumericalError;
      sol.message = "phase 1 did not terminate";
      return sol;
    }
    double art = 0.0;
    for (int r = 0; r < m; ++r)
      if (basis[r] >= N) art += xb[r];
    if (art > 1e-9) {
      sol.status = SolveStatus::Infeasible;
      sol.message = "phase 1 left artificial mass " + std::to_string(art);
      return sol;
    }
    // Drive leftover degenerate artificials out of the basis when possible.
    for (int r = 0; r < m; ++r) {
      if (basis[r] < N) continue;
      Eigen::MatrixXd B(m, m);
      for (int k = 0; k < m; ++k) B.col(k) = T.col(basis[k]);
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
      for (int j = 0; j < N; ++j) {
        Eigen::VectorXd d = lu.solve(T.col(j));
        if (std::abs(d[r]) > 1e-7) {
          bool in_basis = false;
          for (int k = 0; k < m; ++k) in_basis |= (basis[k] == j);
          if (!in_basis) {
            basis[r] = j;
            break;
          }
        }
      }
    }

    // Phase 2.
    Eigen::VectorXd c2 = Eigen::VectorXd::Zero(N + m);
    c2.head(N) = c;
    {
      // Recompute basic values after any basis repair.
      Eigen::MatrixXd B(m, m);
      for (int k = 0; k < m; ++k) B.col(k) = T.col(basis[k]);
      xb = B.partialPivLu().solve(b);
    }
    int phase2 = run_simplex(T, xb, basis, c2, N, /*block_cols_from=*/N);
    if (phase2 == 0) {
      sol.status = SolveStatus::NumericalError;
      sol.message = "phase 2 did not terminate";
      return sol;
    }
    if (phase2 == 2) {
      sol.status = SolveStatus::Unbounded;
      return sol;
    }

    // Recover primal in original variable space.
    Eigen::VectorXd xfull = Eigen::VectorXd::Zero(N + m);
    for (int r = 0; r < m; ++r) xfull[basis[r]] = xb[r];
    sol.primal.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
      double v = xfull[col_of[i]] * flip[i] + shift[i];
      if (neg_col_of[i] >= 0) v -= xfull[neg_col_of[i]];
      sol.primal[i] = v;
    }
    sol.objective = p.eval_objective(sol.primal);

    // Duals: y^T B = c_B, then map to the reporting convention. Rows were
    // possibly sign-flipped to make b >= 0; undo that per row.
    Eigen::MatrixXd B(m, m);
    Eigen::VectorXd cb(m);
    for (int k = 0; k < m; ++k) {
      B.col(k) = T.col(basis[k]);
      cb[k] = c2[basis[k]];
    }
    Eigen::VectorXd y = B.transpose().partialPivLu().solve(cb);
    sol.duals.assign(p.n_constraints(), 0.0);
    for (int r = 0; r < m; ++r) {
      if (drows[r].source < 0) continue;
      // Shadow price d(obj)/d(rhs) of the original row; undo any b<0 flip.
      double shadow = y[r] * rowsign[r];
      const auto& row = p.rows[p.handles[drows[r].source].second];
      if (row.sense == Sense::LE) sol.duals[drows[r].source] = std::max(0.0, -shadow);
      else if (row.sense == Sense::GE) sol.duals[drows[r].source] = std::max(0.0, shadow);
      else sol.duals[drows[r].source] = shadow;
    }

    sol.status = SolveStatus::Optimal;
    sol.solve_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    (void)opt;
    return sol;
  }

 private:
  // Revised-ish simplex on the tableau columns with Bland's rule.
  // Returns 1 on optimal, 2 on unbounded, 0 on iteration blowup.
  static int run_simplex(const Eigen::MatrixXd& T, Eigen::VectorXd& xb, std::vector<int>& basis,
                         const Eigen::VectorXd& cost, int ncols_usable, int block_cols_from = -1) {
    int m = static_cast<int>(T.rows());
    int limit = 50000;
    for (int iter = 0; iter < limit; ++iter) {
      Eigen::MatrixXd B(m, m);
      Eigen::VectorXd cb(m);
      for (int k = 0; k < m; ++k) {
        B.col(k) = T.col(basis[k]);
        cb[k] = cost[basis[k]];
      }
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
      Eigen::VectorXd y = B.transpose().partialPivLu().solve(cb);

      int enter = -1;
      for (int j = 0; j < ncols_usable; ++j) {
        if (block_cols_from >= 0 && j >= block_cols_from) break;
        bool in_basis = false;
        for (int k = 0; k < m; ++k) in_basis |= (basis[k] == j);
        if (in_basis) continue;
        double red = cost[j] - y.dot(T.col(j));
        if (red < -1e-9) {
          enter = j;  // Bland: first improving index
          break;
        }
      }
      if (enter < 0) return 1;

      Eigen::VectorXd d = lu.solve(T.col(enter));
      int leave = -1;
      double best = kInf;
      for (int r = 0; r < m; ++r) {
        if (d[r] > 1e-11) {
          double ratio = xb[r] / d[r];
          if (ratio < best - 1e-12 ||
              (ratio < best + 1e-12 && (leave < 0 || basis[r] < basis[leave]))) {
            best = ratio;
            leave = r;
          }
        }
      }
      if (leave < 0) return 2;
      basis[leave] = enter;
      xb -= best * d;
      xb[leave] = best;
      for (int r = 0; r < m; ++r) xb[r] = std::max(xb[r], 0.0);
    }
    return 0;
  }
};

}  // namespace gridopt
