// Primal-dual interior-point method for SOCPs in homogeneous self-dual
// embedding form, with Nesterov-Todd scaling and a Mehrotra corrector.
// Solves  min c'x  s.t.  Ax = b,  Gx + s = h,  s in K  with K a product of a
// nonnegative orthant and second-order cones; the embedding yields clean
// primal/dual infeasibility certificates instead of divergence.
#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <chrono>
#include <cstdio>

#include "gridopt/conic.hpp"

namespace gridopt {
namespace ipm_detail {

struct ConeLayout {
  int l = 0;                  // leading nonnegative-orthant rows
  std::vector<int> dims;      // one entry per second-order cone (head + args)
  std::vector<int> offs;      // offset of each SOC block
  int total = 0;
  int degree = 0;             // l + number of SOC blocks

  void finish() {
    total = l;
    offs.clear();
    for (int d : dims) {
      offs.push_back(total);
      total += d;
    }
    degree = l + static_cast<int>(dims.size());
  }
};

// How each ConstraintRef maps back into the standard form.
struct DualSlot {
  enum Kind { EqRow, IneqRow, ConeHead, Dropped } kind;
  int index;  // row of A, row of G, or offset of the cone block in z
};

struct StandardForm {
  int n = 0, p = 0;
  Eigen::SparseMatrix<double> A, G;
  Eigen::VectorXd b, h, c;
  ConeLayout cone;
  std::vector<DualSlot> dual_of;  // per constraint handle
  double obj_offset = 0.0;
};

// Flattens a quadratic-free ConicProgram. Row order inside the orthant:
// explicit <=/>= rows in handle order, then variable bounds; fixed variables
// (lb == ub) become equality rows.
inline StandardForm build_standard(const ConicProgram& prog) {
  if (prog.has_quadratic_cost())
    throw std::logic_error("build_standard expects a quadratic-free program");
  StandardForm sf;
  sf.n = prog.n_vars();
  sf.obj_offset = prog.q0;
  sf.c = Eigen::VectorXd::Zero(sf.n);
  for (int i = 0; i < sf.n; ++i) sf.c[i] = prog.q1[i];

  using T = Eigen::Triplet<double>;
  std::vector<T> at, gt;
  std::vector<double> bv, hv;
  sf.dual_of.assign(prog.n_constraints(), DualSlot{DualSlot::IneqRow, -1});

  auto push_eq = [&](const std::vector<LinTerm>& terms, double rhs) {
    int r = static_cast<int>(bv.size());
    for (const LinTerm& t : terms) at.emplace_back(r, t.var, t.coef);
    bv.push_back(rhs);
    return r;
  };
  auto push_le = [&](const std::vector<LinTerm>& terms, double rhs, double sign) {
    int r = static_cast<int>(hv.size());
    for (const LinTerm& t : terms) gt.emplace_back(r, t.var, sign * t.coef);
    hv.push_back(sign * rhs);
    return r;
  };

  for (int k = 0; k < prog.n_constraints(); ++k) {
    const auto& [is_cone, idx] = prog.handles[k];
    if (is_cone) continue;
    const auto& row = prog.rows[idx];
    if (row.sense == Sense::EQ) {
      sf.dual_of[k] = {DualSlot::EqRow, push_eq(row.terms, row.rhs)};
    } else if (row.sense == Sense::LE) {
      sf.dual_of[k] = {DualSlot::IneqRow, push_le(row.terms, row.rhs, 1.0)};
    } else {
      sf.dual_of[k] = {DualSlot::IneqRow, push_le(row.terms, row.rhs, -1.0)};
    }
  }
  for (int i = 0; i < sf.n; ++i) {
    if (prog.lb[i] == prog.ub[i]) {
      push_eq({{i, 1.0}}, prog.lb[i]);
      continue;
    }
    if (std::isfinite(prog.ub[i])) push_le({{i, 1.0}}, prog.ub[i], 1.0);
    if (std::isfinite(prog.lb[i])) push_le({{i, 1.0}}, prog.lb[i], -1.0);
  }
  // A cone whose head is pinned to (near) zero by fixed variables has no
  // relative interior and stalls the central path. Degrade it to arg = 0
  // equalities, which the embedding handles exactly; a head pinned negative
  // becomes the inconsistent row 0 = 1 so infeasibility is certified.
  std::vector<char> degenerate(prog.cones.size(), 0);
  bool cones_survive = false;
  for (std::size_t ci = 0; ci < prog.cones.size(); ++ci) {
    const auto& cone = prog.cones[ci];
    double head = cone.head.offset;
    bool constant = true;
    for (const LinTerm& t : cone.head.terms) {
      if (prog.lb[t.var] == prog.ub[t.var]) {
        head += t.coef * prog.lb[t.var];
      } else {
        constant = false;
        break;
      }
    }
    if (!constant || head > 1e-9) {
      cones_survive = true;
      continue;
    }
    degenerate[ci] = 1;
    if (head < -1e-9) {
      push_eq({}, 1.0);
    } else {
      for (const auto& arg : cone.arg) push_eq(arg.terms, -arg.offset);
    }
  }

  // A program whose variables are all fixed has no inequality part; pad with
  // the vacuous row 0 <= 1 so the embedding keeps a nonempty cone.
  if (hv.empty() && !cones_survive) push_le({}, 1.0, 1.0);
  sf.cone.l = static_cast<int>(hv.size());

  for (int k = 0; k < prog.n_constraints(); ++k) {
    const auto& [is_cone, idx] = prog.handles[k];
    if (!is_cone) continue;
    if (degenerate[idx]) {
      sf.dual_of[k] = {DualSlot::Dropped, -1};
      continue;
    }
    const auto& cone = prog.cones[idx];
    int r0 = static_cast<int>(hv.size());
    sf.dual_of[k] = {DualSlot::ConeHead, r0};
    // s_block = h - Gx must equal (head, args); negate the coefficients.
    for (const LinTerm& t : cone.head.terms) gt.emplace_back(r0, t.var, -t.coef);
    hv.push_back(cone.head.offset);
    for (const auto& arg : cone.arg) {
      int r = static_cast<int>(hv.size());
      for (const LinTerm& t : arg.terms) gt.emplace_back(r, t.var, -t.coef);
      hv.push_back(arg.offset);
    }
    sf.cone.dims.push_back(1 + static_cast<int>(cone.arg.size()));
  }
  sf.cone.finish();

  sf.p = static_cast<int>(bv.size());
  sf.A.resize(sf.p, sf.n);
  sf.A.setFromTriplets(at.begin(), at.end());
  sf.G.resize(sf.cone.total, sf.n);
  sf.G.setFromTriplets(gt.begin(), gt.end());
  sf.b = Eigen::Map<Eigen::VectorXd>(bv.data(), sf.p);
  sf.h = Eigen::Map<Eigen::VectorXd>(hv.data(), sf.cone.total);
  return sf;
}

// --- cone algebra on block vectors ---

inline double min_eig(const ConeLayout& K, const Eigen::VectorXd& v) {
  double me = kInf;
  for (int i = 0; i < K.l; ++i) me = std::min(me, v[i]);
  for (size_t k = 0; k < K.dims.size(); ++k) {
    int o = K.offs[k], d = K.dims[k];
    me = std::min(me, v[o] - v.segment(o + 1, d - 1).norm());
  }
  return K.total ? me : 0.0;
}

inline Eigen::VectorXd cone_identity(const ConeLayout& K) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(K.total);
  for (int i = 0; i < K.l; ++i) e[i] = 1.0;
  for (size_t k = 0; k < K.dims.size(); ++k) e[K.offs[k]] = 1.0;
  return e;
}

inline Eigen::VectorXd jordan_mul(const ConeLayout& K, const Eigen::VectorXd& u,
                                  const Eigen::VectorXd& v) {
  Eigen::VectorXd w(K.total);
  for (int i = 0; i < K.l; ++i) w[i] = u[i] * v[i];
  for (size_t k = 0; k < K.dims.size(); ++k) {
    int o = K.offs[k], d = K.dims[k] - 1;
    w[o] = u.segment(o, d + 1).dot(v.segment(o, d + 1));
    w.segment(o + 1, d) = u[o] * v.segment(o + 1, d) + v[o] * u.segment(o + 1, d);
  }
  return w;
}

// Solves lam o u = d for u.
inline Eigen::VectorXd jordan_div(const ConeLayout& K, const Eigen::VectorXd& lam,
                                  const Eigen::VectorXd& d) {
  Eigen::VectorXd u(K.total);
  for (int i = 0; i < K.l; ++i) u[i] = d[i] / lam[i];
  for (size_t k = 0; k < K.dims.size(); ++k) {
    int o = K.offs[k], m = K.dims[k] - 1;
    double l0 = lam[o];
    auto l1 = lam.segment(o + 1, m);
    double det = l0 * l0 - l1.squaredNorm();
    double u0 = (l0 * d[o] - l1.dot(d.segment(o + 1, m))) / det;
    u[o] = u0;
    u.segment(o + 1, m) = (d.segment(o + 1, m) - u0 * l1) / l0;
  }
  return u;
}

// Largest step alpha with v + alpha*dv staying in the cone (capped).
inline double max_step(const ConeLayout& K, const Eigen::VectorXd& v,
                       const Eigen::VectorXd& dv, double cap) {
  double alpha = cap;
  for (int i = 0; i < K.l; ++i)
    if (dv[i] < 0) alpha = std::min(alpha, -v[i] / dv[i]);
  for (size_t k = 0; k < K.dims.size(); ++k) {
    int o = K.offs[k], m = K.dims[k] - 1;
    double v0 = v[o], d0 = dv[o];
    auto v1 = v.segment(o + 1, m);
    auto d1 = dv.segment(o + 1, m);
    // Boundary where (v0+a*d0)^2 = ||v1+a*d1||^2, with v interior at a=0.
    double qa = d0 * d0 - d1.squaredNorm();
    double qb = 2.0 * (v0 * d0 - v1.dot(d1));
    double qc = v0 * v0 - v1.squaredNorm();
    double root = kInf;
    if (std::abs(qa) < 1e-14) {
      if (qb < 0) root = -qc / qb;
    } else {
      double disc = qb * qb - 4 * qa * qc;
      if (disc >= 0) {
        double sd = std::sqrt(disc);
        double r1 = (-qb - sd) / (2 * qa), r2 = (-qb + sd) / (2 * qa);
        if (r1 > r2) std::swap(r1, r2);
        if (r1 > 1e-14) root = r1;
        else if (r2 > 1e-14) root = r2;
      }
    }
    // Head must stay nonnegative too.
    if (d0 < 0) root = std::min(root, -v0 / d0);
    alpha = std::min(alpha, root);
  }
  return std::max(alpha, 0.0);
}

// Nesterov-Todd scaling point. W maps the z-side onto the s-side:
// lam = W z = W^{-1} s (W symmetric positive definite on each block).
struct NTScaling {
  const ConeLayout* K = nullptr;
  Eigen::VectorXd w_lp;  // sqrt(s/z) per orthant row
  struct SocBlock {
    double eta;             // (s'Js / z'Jz)^(1/4)
    Eigen::VectorXd wbar;   // hyperbolic scaling point, wbar' J wbar = 1
    Eigen::VectorXd vhat;   // Householder form: W/eta = 2 vhat vhat' - J
  };
  std::vector<SocBlock> soc;
  Eigen::VectorXd lambda;

  void compute(const ConeLayout& layout, const Eigen::VectorXd& s, const Eigen::VectorXd& z) {
    K = &layout;
    w_lp.resize(layout.l);
    lambda.resize(layout.total);
    for (int i = 0; i < layout.l; ++i) {
      w_lp[i] = std::sqrt(s[i] / z[i]);
      lambda[i] = std::sqrt(s[i] * z[i]);
    }
    soc.resize(layout.dims.size());
    for (size_t k = 0; k < layout.dims.size(); ++k) {
      int o = layout.offs[k], d = layout.dims[k];
      auto sb = s.segment(o, d);
      auto zb = z.segment(o, d);
      double sres = sb[0] * sb[0] - sb.tail(d - 1).squaredNorm();
      double zres = zb[0] * zb[0] - zb.tail(d - 1).squaredNorm();
      sres = std::max(sres, 1e-300);
      zres = std::max(zres, 1e-300);
      Eigen::VectorXd sbar = sb / std::sqrt(sres);
      Eigen::VectorXd zbar = zb / std::sqrt(zres);
      double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
      Eigen::VectorXd wb(d);
      wb[0] = (sbar[0] + zbar[0]) / (2 * gamma);
      wb.tail(d - 1) = (sbar.tail(d - 1) - zbar.tail(d - 1)) / (2 * gamma);
      soc[k].eta = std::pow(sres / zres, 0.25);
      soc[k].wbar = wb;
      // (2 wbar wbar' - J) is W^2/eta^2; the matrix square root comes from
      // the hyperbolic Householder vector (wbar + e)/sqrt(2 (wbar0 + 1)).
      Eigen::VectorXd vh = wb;
      vh[0] += 1.0;
      vh /= std::sqrt(2.0 * (wb[0] + 1.0));
      soc[k].vhat = vh;
      lambda.segment(o, d) = apply_soc(k, zb, false);
    }
  }

  // Applies W (inv=false) or W^{-1} (inv=true) to one SOC block.
  // W = eta (2 vhat vhat' - J); W^{-1} = (1/eta)(2 (J vhat)(J vhat)' - J).
  Eigen::VectorXd apply_soc(size_t k, const Eigen::VectorXd& v, bool inv) const {
    const auto& blk = soc[k];
    int d = static_cast<int>(v.size());
    Eigen::VectorXd basis = blk.vhat;
    if (inv) basis.tail(d - 1) = -basis.tail(d - 1);
    Eigen::VectorXd jv = v;
    jv.tail(d - 1) = -jv.tail(d - 1);
    Eigen::VectorXd out = 2.0 * basis.dot(v) * basis - jv;
    out *= inv ? 1.0 / blk.eta : blk.eta;
    return out;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& v, bool inv) const {
    Eigen::VectorXd out(K->total);
    for (int i = 0; i < K->l; ++i) out[i] = inv ? v[i] / w_lp[i] : v[i] * w_lp[i];
    for (size_t k = 0; k < K->dims.size(); ++k) {
      int o = K->offs[k], d = K->dims[k];
      out.segment(o, d) = apply_soc(k, v.segment(o, d), inv);
    }
    return out;
  }

  // Dense W^2 block for one SOC (small: cone dims here are 3..5).
  // W^2 = eta^2 (2 wbar wbar' - J).
  Eigen::MatrixXd wsq_block(size_t k) const {
    const auto& blk = soc[k];
    int d = static_cast<int>(blk.wbar.size());
    Eigen::MatrixXd m = 2.0 * blk.wbar * blk.wbar.transpose();
    m(0, 0) -= 1.0;
    for (int i = 1; i < d; ++i) m(i, i) += 1.0;
    return blk.eta * blk.eta * m;
  }
};

}  // namespace ipm_detail

class InteriorPointBackend : public SocpBackend {
 public:
  std::string name() const override { return "interior-point"; }

  ConicSolution solve(const ConicProgram& prog, const SolveOptions& opt) override {
    using namespace ipm_detail;
    auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    if (prog.has_quadratic_cost()) {
      // Epigraph reformulation appends vars/cones; handles keep their ids.
      ConicProgram socp = quadratic_to_socp(prog);
      ConicSolution sol = solve(socp, opt);
      if (static_cast<int>(sol.primal.size()) > prog.n_vars()) {
        sol.primal.resize(prog.n_vars());
        sol.duals.resize(prog.n_constraints());
      }
      if (sol.status == SolveStatus::Optimal) sol.objective = prog.eval_objective(sol.primal);
      return sol;
    }

    ConicSolution sol;
    StandardForm sf;
    try {
      sf = build_standard(prog);
    } catch (const std::exception& e) {
      sol.status = SolveStatus::NumericalError;
      sol.message = e.what();
      return sol;
    }
    const int n = sf.n, p = sf.p, m = sf.cone.total;
    const ConeLayout& K = sf.cone;

    if (m == 0) {
      // No inequalities at all: not a shape our formulations produce.
      sol.status = SolveStatus::NumericalError;
      sol.message = "program has no conic part";
      return sol;
    }

    const double bnorm = std::max(1.0, sf.b.norm());
    const double hnorm = std::max(1.0, sf.h.norm());
    const double cnorm = std::max(1.0, sf.c.norm());

    // KKT matrix [[eps, A', G'], [A, -eps, 0], [G, 0, -W^2-eps]] (lower part),
    // with constant sparsity pattern across iterations.
    const int dim = n + p + m;
    const double reg = 1e-8;
    Eigen::SparseMatrix<double> kkt(dim, dim);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                          Eigen::AMDOrdering<int>>
        ldlt;
    bool analyzed = false;

    auto assemble = [&](const NTScaling* scale) {
      std::vector<Eigen::Triplet<double>> trips;
      trips.reserve(static_cast<size_t>(sf.A.nonZeros() + sf.G.nonZeros() + dim + 16 * K.dims.size()));
      for (int i = 0; i < dim; ++i) {
        double d = i < n ? reg : -reg;
        trips.emplace_back(i, i, d);
      }
      for (int col = 0; col < sf.A.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(sf.A, col); it; ++it)
          trips.emplace_back(n + it.row(), col, it.value());  // lower block A
      for (int col = 0; col < sf.G.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(sf.G, col); it; ++it)
          trips.emplace_back(n + p + it.row(), col, it.value());
      // -W^2 block.
      for (int i = 0; i < K.l; ++i) {
        double w2 = scale ? scale->w_lp[i] * scale->w_lp[i] : 1.0;
        trips.emplace_back(n + p + i, n + p + i, -w2);
      }
      for (size_t k = 0; k < K.dims.size(); ++k) {
        int o = K.offs[k], d = K.dims[k];
        if (scale) {
          Eigen::MatrixXd blk = scale->wsq_block(k);
          for (int r = 0; r < d; ++r)
            for (int c = 0; c <= r; ++c) trips.emplace_back(n + p + o + r, n + p + o + c, -blk(r, c));
        } else {
          for (int r = 0; r < d; ++r)
            for (int c = 0; c <= r; ++c)
              trips.emplace_back(n + p + o + r, n + p + o + c, r == c ? -1.0 : 0.0);
        }
      }
      kkt.setFromTriplets(trips.begin(), trips.end(), [](double a, double b) { return a + b; });
      if (!analyzed) {
        ldlt.analyzePattern(kkt);
        analyzed = true;
      }
      ldlt.factorize(kkt);
      return ldlt.info() == Eigen::Success;
    };

    // Unregularized apply for iterative refinement.
    auto apply_kkt = [&](const NTScaling* scale, const Eigen::VectorXd& u) {
      Eigen::VectorXd ux = u.head(n), uy = u.segment(n, p), uz = u.tail(m);
      Eigen::VectorXd rx = sf.A.transpose() * uy + sf.G.transpose() * uz;
      Eigen::VectorXd ry = sf.A * ux;
      Eigen::VectorXd rz = sf.G * ux;
      if (scale) {
        Eigen::VectorXd wz = scale->apply(uz, false);
        rz -= scale->apply(wz, false);
      } else {
        rz -= uz;
      }
      Eigen::VectorXd out(dim);
      out << rx, ry, rz;
      return out;
    };

    auto kkt_solve = [&](const NTScaling* scale, const Eigen::VectorXd& rhs) {
      Eigen::VectorXd u = ldlt.solve(rhs);
      for (int pass = 0; pass < 2; ++pass) {
        Eigen::VectorXd res = rhs - apply_kkt(scale, u);
        u += ldlt.solve(res);
      }
      return u;
    };

    // --- initialization: least-squares point shifted into the interior ---
    Eigen::VectorXd x, y, z, s;
    {
      if (!assemble(nullptr)) {
        sol.status = SolveStatus::NumericalError;
        sol.message = "initial KKT factorization failed";
        return sol;
      }
      Eigen::VectorXd rhs(dim);
      rhs << Eigen::VectorXd::Zero(n), sf.b, sf.h;
      Eigen::VectorXd u = kkt_solve(nullptr, rhs);
      x = u.head(n);
      s = sf.h - sf.G * x;
      double shift = -min_eig(K, s);
      if (shift >= -1e-10) s += (1.0 + shift) * cone_identity(K);

      rhs << -sf.c, Eigen::VectorXd::Zero(p), Eigen::VectorXd::Zero(m);
      u = kkt_solve(nullptr, rhs);
      y = u.segment(n, p);
      z = u.tail(m);
      shift = -min_eig(K, z);
      if (shift >= -1e-10) z += (1.0 + shift) * cone_identity(K);
    }
    double tau = 1.0, kappa = 1.0;
    const int nu = K.degree + 1;

    NTScaling W;
    sol.status = SolveStatus::NumericalError;
    sol.message = "iteration limit";

    // Degenerate restrictions (e.g. switching models with the indicator
    // pinned) can blow up numerically after the iterates are already good;
    // keep the best point seen so such runs still return a usable solution.
    double best_merit = kInf;
    Eigen::VectorXd bx, by, bz;
    double btau = 1.0;
    const double acceptable = 1e-6;

    for (int iter = 0; iter <= opt.max_iters; ++iter) {
      // Residuals of the embedding.
      Eigen::VectorXd rx = sf.A.transpose() * y + sf.G.transpose() * z + sf.c * tau;
      Eigen::VectorXd ry = sf.A * x - sf.b * tau;
      Eigen::VectorXd rz = sf.G * x + s - sf.h * tau;
      double rtau = kappa + sf.c.dot(x) + sf.b.dot(y) + sf.h.dot(z);
      double mu = (s.dot(z) + tau * kappa) / nu;

      double pcost = sf.c.dot(x) / tau;
      double dcost = -(sf.b.dot(y) + sf.h.dot(z)) / tau;
      double gap = s.dot(z) / (tau * tau);
      double relgap = gap / std::max(1.0, std::abs(pcost));
      double pres = std::max((ry / tau).norm() / bnorm, (rz / tau).norm() / hnorm);
      double dres = (rx / tau).norm() / cnorm;

      if (opt.verbose)
        std::fprintf(stderr,
                     "ipm %3d pcost %+.6e dcost %+.6e gap %.2e pres %.2e dres %.2e tau %.2e kap %.2e mu %.2e\n",
                     iter, pcost, dcost, gap, pres, dres, tau, kappa, mu);

      double merit = std::max({pres, dres, relgap});
      if (std::isfinite(merit) && merit < best_merit) {
        best_merit = merit;
        bx = x;
        by = y;
        bz = z;
        btau = tau;
      }

      if (pres <= opt.feas_tol && dres <= opt.feas_tol &&
          (gap <= opt.feas_tol || relgap <= 1e-7)) {
        sol.status = SolveStatus::Optimal;
        sol.message.clear();
        break;
      }
      // Infeasibility certificates: (y, z) is a Farkas ray (z stays in K*
      // by construction), and x an unboundedness ray, once normalized.
      double hzby = sf.h.dot(z) + sf.b.dot(y);
      if (hzby < -1e-12) {
        double cert = (sf.A.transpose() * y + sf.G.transpose() * z).norm() / (-hzby) / cnorm;
        if (cert <= opt.feas_tol) {
          sol.status = SolveStatus::Infeasible;
          sol.message.clear();
          break;
        }
      }
      double cx = sf.c.dot(x);
      if (cx < -1e-12) {
        double cert = std::max((sf.A * x).norm() / bnorm, (sf.G * x + s).norm() / hnorm) / (-cx);
        if (cert <= opt.feas_tol) {
          sol.status = SolveStatus::Unbounded;
          sol.message.clear();
          break;
        }
      }

      if (iter == opt.max_iters) break;
      if (elapsed() > opt.time_limit) {
        sol.status = SolveStatus::TimeLimit;
        sol.message = "time limit during interior-point iterations";
        break;
      }

      W.compute(K, s, z);
      if (!assemble(&W)) {
        sol.message = "KKT factorization failed";
        break;
      }

      // Constant second solve per iteration: M [x2;y2;z2] = [-c; b; h].
      Eigen::VectorXd rhs2(dim);
      rhs2 << -sf.c, sf.b, sf.h;
      Eigen::VectorXd u2 = kkt_solve(&W, rhs2);
      Eigen::VectorXd x2 = u2.head(n), y2 = u2.segment(n, p), z2 = u2.tail(m);
      double denom = sf.c.dot(x2) + sf.b.dot(y2) + sf.h.dot(z2) - kappa / tau;

      auto direction = [&](double sigma, const Eigen::VectorXd& ds_vec, double dk_vec,
                           Eigen::VectorXd& dx, Eigen::VectorXd& dy, Eigen::VectorXd& dz,
                           Eigen::VectorXd& ds, double& dtau, double& dkappa) {
        double f = 1.0 - sigma;
        Eigen::VectorXd g = jordan_div(K, W.lambda, ds_vec);
        Eigen::VectorXd rhs1(dim);
        rhs1 << -f * rx, -f * ry, -(f * rz) - W.apply(g, false);
        Eigen::VectorXd u1 = kkt_solve(&W, rhs1);
        Eigen::VectorXd x1 = u1.head(n), y1 = u1.segment(n, p), z1 = u1.tail(m);
        double num = -f * rtau - dk_vec / tau - (sf.c.dot(x1) + sf.b.dot(y1) + sf.h.dot(z1));
        dtau = num / denom;
        dx = x1 + dtau * x2;
        dy = y1 + dtau * y2;
        dz = z1 + dtau * z2;
        ds = -(f * rz) + sf.h * dtau - sf.G * dx;
        dkappa = (dk_vec - kappa * dtau) / tau;
      };

      // Affine (predictor) direction.
      Eigen::VectorXd lam2 = jordan_mul(K, W.lambda, W.lambda);
      Eigen::VectorXd dxa, dya, dza, dsa;
      double dtaua, dkappaa;
      direction(0.0, -lam2, -tau * kappa, dxa, dya, dza, dsa, dtaua, dkappaa);

      double alpha_a = max_step(K, s, dsa, 1.0);
      alpha_a = std::min(alpha_a, max_step(K, z, dza, 1.0));
      if (dtaua < 0) alpha_a = std::min(alpha_a, -tau / dtaua);
      if (dkappaa < 0) alpha_a = std::min(alpha_a, -kappa / dkappaa);
      double mu_aff = ((s + alpha_a * dsa).dot(z + alpha_a * dza) +
                       (tau + alpha_a * dtaua) * (kappa + alpha_a * dkappaa)) /
                      nu;
      double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

      // Combined direction with Mehrotra correction.
      Eigen::VectorXd corr =
          jordan_mul(K, W.apply(dsa, true), W.apply(dza, false));
      Eigen::VectorXd ds_vec = -lam2 - corr + sigma * mu * cone_identity(K);
      double dk_vec = -tau * kappa - dtaua * dkappaa + sigma * mu;
      Eigen::VectorXd dx, dy, dz, ds;
      double dtau, dkappa;
      direction(sigma, ds_vec, dk_vec, dx, dy, dz, ds, dtau, dkappa);

      double alpha = max_step(K, s, ds, kInf);
      alpha = std::min(alpha, max_step(K, z, dz, kInf));
      if (dtau < 0) alpha = std::min(alpha, -tau / dtau);
      if (dkappa < 0) alpha = std::min(alpha, -kappa / dkappa);
      alpha = std::min(0.99 * alpha, 1.0);
      if (opt.verbose)
        std::fprintf(stderr, "      alpha_aff %.3e sigma %.3e alpha %.3e dtau %+.2e dkap %+.2e\n",
                     alpha_a, sigma, alpha, dtau, dkappa);
      if (!(alpha > 1e-10) || !std::isfinite(alpha) || !std::isfinite(dtau) ||
          !std::isfinite(dkappa)) {
        sol.message = "step size collapsed";
        break;
      }

      x += alpha * dx;
      y += alpha * dy;
      z += alpha * dz;
      s += alpha * ds;
      tau += alpha * dtau;
      kappa += alpha * dkappa;
    }

    if (sol.status == SolveStatus::NumericalError && best_merit <= acceptable) {
      x = bx;
      y = by;
      z = bz;
      tau = btau;
      sol.status = SolveStatus::Optimal;
      sol.message = "reduced accuracy";
    }

    sol.solve_time = elapsed();
    if (sol.status == SolveStatus::Optimal || sol.status == SolveStatus::TimeLimit ||
        sol.message == "iteration limit") {
      sol.primal.assign(n, 0.0);
      for (int i = 0; i < n; ++i) sol.primal[i] = x[i] / tau;
      sol.duals.assign(prog.n_constraints(), 0.0);
      for (int k = 0; k < prog.n_constraints(); ++k) {
        const DualSlot& slot = sf.dual_of[k];
        if (slot.kind == DualSlot::Dropped) sol.duals[k] = 0.0;
        else if (slot.kind == DualSlot::EqRow) sol.duals[k] = -y[slot.index] / tau;
        else sol.duals[k] = std::max(0.0, z[slot.index] / tau);
      }
      if (sol.status == SolveStatus::Optimal) sol.objective = prog.eval_objective(sol.primal);
    }
    return sol;
  }
};

inline ConicSolution solve_continuous(const ConicProgram& p, const SolveOptions& opt = {},
                                      SocpBackend* backend = nullptr) {
  static InteriorPointBackend fallback;
  SocpBackend* be = backend ? backend : &fallback;
  return be->solve(p, opt);
}

}  // namespace gridopt
