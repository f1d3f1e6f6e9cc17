// Optimization models over a Network: DC OPF, DC transmission switching,
// SOCP-relaxed AC OPF (with or without McCormick angle coupling), and the
// big-M mixed-integer SOCP for AC transmission switching. Builders return a
// ModelHandle that pairs the ConicProgram with index maps so solutions and
// duals can be mapped back to buses, branches, and generators.
#pragma once

#include <cstdio>
#include <map>
#include <optional>
#include <queue>

#include "gridopt/conic.hpp"
#include "gridopt/netmodel.hpp"

namespace gridopt {

enum class FormulationKind { DcOpf, DcOts, SocpAcOpf, SocpAcOpfMce, OtsMisocpMce };

inline const char* to_string(FormulationKind k) {
  switch (k) {
    case FormulationKind::DcOpf: return "dc";
    case FormulationKind::DcOts: return "dc-ots";
    case FormulationKind::SocpAcOpf: return "socp";
    case FormulationKind::SocpAcOpfMce: return "socp-mce";
    case FormulationKind::OtsMisocpMce: return "ots-misocp";
  }
  return "?";
}

// Bounds on c = v_i v_j cos(dth) and s = v_i v_j sin(dth) over a voltage band
// and an angle-difference box. The cosine lower bound uses the band edge that
// actually attains the minimum (v_min when cos >= 0, v_max when cos < 0).
struct CsBounds {
  double c_lo, c_hi, s_lo, s_hi;
};

inline CsBounds mce_bounds(double v_min, double v_max, double th_lo, double th_hi) {
  if (!(0.0 < v_min && v_min <= v_max))
    throw std::invalid_argument("mce_bounds: need 0 < v_min <= v_max");
  if (!(th_lo <= 0.0 && 0.0 <= th_hi))
    throw std::invalid_argument("mce_bounds: need th_lo <= 0 <= th_hi");
  double th_abs = std::max(-th_lo, th_hi);
  double cmin = std::cos(th_abs);
  CsBounds b;
  b.c_hi = v_max * v_max;
  b.c_lo = (cmin >= 0.0 ? v_min * v_min : v_max * v_max) * cmin;
  b.s_hi = v_max * v_max * std::sin(std::min(th_abs, std::asin(1.0)));
  b.s_lo = -b.s_hi;
  return b;
}

struct ModelHandle {
  FormulationKind kind{};
  Network net;
  ConicProgram program;
  double big_m = 0.0;
  std::optional<int> budget;
  int slack = -1;                         // internal bus index
  std::vector<std::pair<int, int>> ends;  // per branch: internal (from, to)

  // Variables. Entries are invalid where the formulation has no such
  // variable (e.g. theta in the plain SOCP, everything on a dead branch).
  std::vector<VarRef> pg, qg;                      // per generator
  std::vector<VarRef> theta, e;                    // per bus
  std::vector<VarRef> c, s, w;                     // per branch
  std::vector<VarRef> p_from, q_from, p_to, q_to;  // per branch
  std::vector<VarRef> f;                           // per branch, DC switching flow
  std::vector<VarRef> sw;                          // per branch, closed indicator

  // Constraints.
  std::vector<ConstraintRef> p_balance, q_balance;  // per bus
  std::vector<ConstraintRef> flow_up, flow_dn;      // per branch, DC family
  std::vector<ConstraintRef> cone_from, cone_to;    // per branch, SOCP family
  std::vector<ConstraintRef> d_cone;                // per branch
  std::vector<ConstraintRef> mce;                   // 4 per branch, flattened
  std::vector<ConstraintRef> bigm;                  // switching link rows
  std::vector<CsBounds> cs_box;                     // per branch
  ConstraintRef budget_row;

  std::vector<double> initial;  // warm-start point; empty = none
};

struct DispatchSolution {
  FormulationKind formulation{};
  double objective = std::numeric_limits<double>::quiet_NaN();  // $/h
  std::vector<double> pg, qg;                      // per generator, pu
  std::vector<double> e, theta;                    // per bus
  std::vector<double> p_from, q_from, p_to, q_to;  // per branch, pu
  std::vector<bool> open;                          // per branch
};

namespace form_detail {

// Merges duplicate variables; ordered map keeps row layout deterministic.
struct RowAcc {
  std::map<int, double> coef;
  void add(VarRef v, double x) {
    if (x != 0.0) coef[v.id] += x;
  }
  std::vector<LinTerm> terms() const {
    std::vector<LinTerm> t;
    t.reserve(coef.size());
    for (const auto& [var, x] : coef)
      if (x != 0.0) t.push_back({var, x});
    return t;
  }
};

struct Topology {
  int slack = -1;
  std::vector<std::pair<int, int>> ends;          // per branch, internal indices
  std::vector<std::vector<int>> gens_at;          // bus -> generator indices
  std::vector<std::vector<int>> lines_from, lines_to;  // bus -> branch indices (live only)

  explicit Topology(const Network& net)
      : ends(net.branches.size(), {-1, -1}),
        gens_at(net.buses.size()),
        lines_from(net.buses.size()),
        lines_to(net.buses.size()) {
    BusIndex idx(net);
    for (int i = 0; i < net.n_buses(); ++i)
      if (net.buses[i].kind == BusKind::Slack) slack = i;
    if (slack < 0) throw std::invalid_argument("network has no slack bus");
    for (int g = 0; g < net.n_generators(); ++g)
      gens_at[idx.at(net.generators[g].bus)].push_back(g);
    for (int l = 0; l < net.n_branches(); ++l) {
      const Branch& br = net.branches[l];
      ends[l] = {idx.at(br.from_bus), idx.at(br.to_bus)};
      if (!br.status) continue;
      lines_from[ends[l].first].push_back(l);
      lines_to[ends[l].second].push_back(l);
    }
  }

  bool live(const Network& net, int l) const { return net.branches[l].status; }
};

inline std::string tag(const char* base, int i) { return std::string(base) + std::to_string(i); }

// Costs are quoted in MW, variables live in pu: scale by base_mva.
inline void add_generation_cost(ConicProgram& p, const Network& net,
                                const std::vector<VarRef>& pg) {
  double base = net.base_mva;
  for (int g = 0; g < net.n_generators(); ++g) {
    const Generator& gen = net.generators[g];
    if (gen.c2 != 0.0) p.add_quad_cost(pg[g], gen.c2 * base * base);
    if (gen.c1 != 0.0) p.add_linear_cost(pg[g], gen.c1 * base);
    p.q0 += gen.c0;
  }
}

// Susceptance of the lossless DC model: series reactance and tap only.
inline double dc_susceptance(const Branch& br) { return 1.0 / (br.x * br.tap); }

// Angle variables stay bounded even when switching islands a bus group; the
// cap is far outside any per-line angle box so it never binds when connected.
inline double theta_cap(const Network& net) {
  double amax = 0.0;
  for (const Branch& br : net.branches) amax = std::max(amax, std::max(br.angle_max, -br.angle_min));
  return amax * net.n_buses() + 1.0;
}

inline void check_budget(const std::optional<int>& budget) {
  if (budget && *budget < 0) throw std::invalid_argument("switching budget must be >= 0");
}

}  // namespace form_detail

inline ModelHandle build_dc_opf(const Network& net) {
  using namespace form_detail;
  require_valid(net);
  ModelHandle h;
  h.kind = FormulationKind::DcOpf;
  h.net = net;
  Topology topo(net);
  h.slack = topo.slack;
  h.ends = topo.ends;
  ConicProgram& p = h.program;

  int nb = net.n_buses(), nl = net.n_branches(), ng = net.n_generators();
  double cap = theta_cap(net);
  h.theta.resize(nb);
  for (int i = 0; i < nb; ++i) h.theta[i] = p.add_var(-cap, cap, tag("th", net.buses[i].id));
  p.fix_var(h.theta[topo.slack], 0.0);

  h.pg.resize(ng);
  for (int g = 0; g < ng; ++g)
    h.pg[g] = p.add_var(net.generators[g].p_min, net.generators[g].p_max, tag("pg", g));
  add_generation_cost(p, net, h.pg);

  h.flow_up.resize(nl);
  h.flow_dn.resize(nl);
  std::vector<RowAcc> bal(nb);
  std::vector<double> rhs(nb);
  for (int i = 0; i < nb; ++i) {
    rhs[i] = net.buses[i].p_demand + net.buses[i].gs;
    for (int g : topo.gens_at[i]) bal[i].add(h.pg[g], 1.0);
  }
  for (int l = 0; l < nl; ++l) {
    const Branch& br = net.branches[l];
    if (!br.status) continue;
    auto [i, j] = topo.ends[l];
    double b = dc_susceptance(br);
    // flow i->j is b*(th_i - th_j - shift); it leaves i and arrives at j
    bal[i].add(h.theta[i], -b);
    bal[i].add(h.theta[j], b);
    rhs[i] += -b * br.shift;
    bal[j].add(h.theta[i], b);
    bal[j].add(h.theta[j], -b);
    rhs[j] += b * br.shift;
    if (br.rate > 0.0) {
      h.flow_up[l] = p.add_row({{h.theta[i].id, b}, {h.theta[j].id, -b}}, Sense::LE,
                               br.rate + b * br.shift, tag("flow_up:", l));
      h.flow_dn[l] = p.add_row({{h.theta[i].id, b}, {h.theta[j].id, -b}}, Sense::GE,
                               -br.rate + b * br.shift, tag("flow_dn:", l));
    }
    p.add_row({{h.theta[i].id, 1.0}, {h.theta[j].id, -1.0}}, Sense::LE, br.angle_max,
              tag("ang_up:", l));
    p.add_row({{h.theta[i].id, 1.0}, {h.theta[j].id, -1.0}}, Sense::GE, br.angle_min,
              tag("ang_dn:", l));
  }
  h.p_balance.resize(nb);
  for (int i = 0; i < nb; ++i)
    h.p_balance[i] = p.add_row(bal[i].terms(), Sense::EQ, rhs[i], tag("pbal", net.buses[i].id));
  return h;
}

inline ModelHandle build_dc_ots(const Network& net, std::optional<int> budget,
                                double big_m = 100.0) {
  using namespace form_detail;
  require_valid(net);
  check_budget(budget);
  if (big_m <= 0.0) throw std::invalid_argument("big_m must be positive");
  ModelHandle h;
  h.kind = FormulationKind::DcOts;
  h.net = net;
  h.big_m = big_m;
  h.budget = budget;
  Topology topo(net);
  h.slack = topo.slack;
  h.ends = topo.ends;
  ConicProgram& p = h.program;
  double M = big_m;

  int nb = net.n_buses(), nl = net.n_branches(), ng = net.n_generators();
  double cap = theta_cap(net);
  h.theta.resize(nb);
  for (int i = 0; i < nb; ++i) h.theta[i] = p.add_var(-cap, cap, tag("th", net.buses[i].id));
  p.fix_var(h.theta[topo.slack], 0.0);
  h.pg.resize(ng);
  for (int g = 0; g < ng; ++g)
    h.pg[g] = p.add_var(net.generators[g].p_min, net.generators[g].p_max, tag("pg", g));
  add_generation_cost(p, net, h.pg);

  h.f.resize(nl);
  h.sw.resize(nl);
  h.flow_up.resize(nl);
  h.flow_dn.resize(nl);
  std::vector<RowAcc> bal(nb);
  std::vector<double> rhs(nb);
  for (int i = 0; i < nb; ++i) {
    rhs[i] = net.buses[i].p_demand + net.buses[i].gs;
    for (int g : topo.gens_at[i]) bal[i].add(h.pg[g], 1.0);
  }
  int live = 0;
  for (int l = 0; l < nl; ++l) {
    const Branch& br = net.branches[l];
    if (!br.status) continue;
    ++live;
    auto [i, j] = topo.ends[l];
    h.f[l] = p.add_var(-M, M, tag("f", l));
    h.sw[l] = p.add_var(0.0, 1.0, tag("z", l), VarKind::Binary);
    if (!br.switchable) p.fix_var(h.sw[l], 1.0);
    bal[i].add(h.f[l], -1.0);
    bal[j].add(h.f[l], 1.0);
    double b = dc_susceptance(br);
    // closed (z=1): f = b*(th_i - th_j - shift); open: the link goes slack
    h.bigm.push_back(p.add_row(
        {{h.f[l].id, 1.0}, {h.theta[i].id, -b}, {h.theta[j].id, b}, {h.sw[l].id, M}}, Sense::LE,
        M - b * br.shift, tag("def_up:", l)));
    h.bigm.push_back(p.add_row(
        {{h.f[l].id, 1.0}, {h.theta[i].id, -b}, {h.theta[j].id, b}, {h.sw[l].id, -M}}, Sense::GE,
        -M - b * br.shift, tag("def_dn:", l)));
    double rate = br.rate > 0.0 ? br.rate : M;
    h.flow_up[l] =
        p.add_row({{h.f[l].id, 1.0}, {h.sw[l].id, -rate}}, Sense::LE, 0.0, tag("flow_up:", l));
    h.flow_dn[l] =
        p.add_row({{h.f[l].id, 1.0}, {h.sw[l].id, rate}}, Sense::GE, 0.0, tag("flow_dn:", l));
    // angle box is released for open lines the same way as the flow link
    h.bigm.push_back(
        p.add_row({{h.theta[i].id, 1.0}, {h.theta[j].id, -1.0}, {h.sw[l].id, M}}, Sense::LE,
                  br.angle_max + M, tag("ang_up:", l)));
    h.bigm.push_back(
        p.add_row({{h.theta[i].id, 1.0}, {h.theta[j].id, -1.0}, {h.sw[l].id, -M}}, Sense::GE,
                  br.angle_min - M, tag("ang_dn:", l)));
  }
  h.p_balance.resize(nb);
  for (int i = 0; i < nb; ++i)
    h.p_balance[i] = p.add_row(bal[i].terms(), Sense::EQ, rhs[i], tag("pbal", net.buses[i].id));
  if (budget) {
    RowAcc acc;
    for (int l = 0; l < nl; ++l)
      if (h.sw[l].valid()) acc.add(h.sw[l], -1.0);
    h.budget_row = p.add_row(acc.terms(), Sense::LE, double(*budget) - live, "budget");
  }
  return h;
}

namespace form_detail {

// Shared core of the SOCP relaxation and its switching variant. When `sw` is
// null the flow definitions and the s-w link are equalities; otherwise they
// are big-M rows driven by the per-line closed indicator.
inline void build_socp_core(ModelHandle& h, bool with_mce, const std::vector<VarRef>* sw_vars,
                            double M) {
  const Network& net = h.net;
  Topology topo(net);
  h.slack = topo.slack;
  h.ends = topo.ends;
  ConicProgram& p = h.program;
  int nb = net.n_buses(), nl = net.n_branches(), ng = net.n_generators();

  h.e.resize(nb);
  for (int i = 0; i < nb; ++i) {
    const Bus& bus = net.buses[i];
    h.e[i] = p.add_var(bus.v_min * bus.v_min, bus.v_max * bus.v_max, tag("e", bus.id));
  }
  if (with_mce) {
    double cap = theta_cap(net);
    h.theta.resize(nb);
    for (int i = 0; i < nb; ++i) h.theta[i] = p.add_var(-cap, cap, tag("th", net.buses[i].id));
    p.fix_var(h.theta[topo.slack], 0.0);
  }
  h.pg.resize(ng);
  h.qg.resize(ng);
  for (int g = 0; g < ng; ++g) {
    const Generator& gen = net.generators[g];
    h.pg[g] = p.add_var(gen.p_min, gen.p_max, tag("pg", g));
    h.qg[g] = p.add_var(gen.q_min, gen.q_max, tag("qg", g));
  }
  add_generation_cost(p, net, h.pg);

  h.c.resize(nl);
  h.s.resize(nl);
  h.w.resize(nl);
  h.p_from.resize(nl);
  h.q_from.resize(nl);
  h.p_to.resize(nl);
  h.q_to.resize(nl);
  h.cone_from.resize(nl);
  h.cone_to.resize(nl);
  h.d_cone.resize(nl);
  h.cs_box.resize(nl);

  std::vector<RowAcc> pbal(nb), qbal(nb);
  std::vector<double> prhs(nb), qrhs(nb);
  for (int i = 0; i < nb; ++i) {
    const Bus& bus = net.buses[i];
    prhs[i] = bus.p_demand;
    qrhs[i] = bus.q_demand;
    pbal[i].add(h.e[i], -bus.gs);
    qbal[i].add(h.e[i], bus.bs);
    for (int g : topo.gens_at[i]) {
      pbal[i].add(h.pg[g], 1.0);
      qbal[i].add(h.qg[g], 1.0);
    }
  }

  for (int l = 0; l < nl; ++l) {
    const Branch& br = net.branches[l];
    if (!br.status) continue;
    auto [i, j] = topo.ends[l];
    const Bus& bi = net.buses[i];
    const Bus& bj = net.buses[j];
    CsBounds box = mce_bounds(std::sqrt(bi.v_min * bj.v_min), std::sqrt(bi.v_max * bj.v_max),
                              br.angle_min, br.angle_max);
    h.cs_box[l] = box;
    h.c[l] = p.add_var(box.c_lo, box.c_hi, tag("c", l));
    h.s[l] = p.add_var(box.s_lo, box.s_hi, tag("s", l));
    h.p_from[l] = p.add_var(-kInf, kInf, tag("pf", l));
    h.q_from[l] = p.add_var(-kInf, kInf, tag("qf", l));
    h.p_to[l] = p.add_var(-kInf, kInf, tag("pt", l));
    h.q_to[l] = p.add_var(-kInf, kInf, tag("qt", l));

    BranchAdmittance y = branch_admittance(br);
    double gff = y.yff.real(), bff = y.yff.imag();
    double gft = y.yft.real(), bft = y.yft.imag();
    double gtf = y.ytf.real(), btf = y.ytf.imag();
    double gtt = y.ytt.real(), btt = y.ytt.imag();
    // S_from = e_i conj(y_ff) + (c + js) conj(y_ft), S_to mirrored with -s
    struct Def {
      VarRef flow;
      VarRef ev;
      double ke, kc, ks;
      const char* name;
    };
    Def defs[4] = {
        {h.p_from[l], h.e[i], gff, gft, bft, "pf_def:"},
        {h.q_from[l], h.e[i], -bff, -bft, gft, "qf_def:"},
        {h.p_to[l], h.e[j], gtt, gtf, -btf, "pt_def:"},
        {h.q_to[l], h.e[j], -btt, -btf, -gtf, "qt_def:"},
    };
    for (const Def& d : defs) {
      std::vector<LinTerm> lhs = {{d.flow.id, 1.0},
                                  {d.ev.id, -d.ke},
                                  {h.c[l].id, -d.kc},
                                  {h.s[l].id, -d.ks}};
      if (!sw_vars) {
        p.add_row(lhs, Sense::EQ, 0.0, tag(d.name, l));
      } else {
        std::vector<LinTerm> up = lhs, dn = lhs;
        up.push_back({(*sw_vars)[l].id, M});
        dn.push_back({(*sw_vars)[l].id, -M});
        h.bigm.push_back(p.add_row(std::move(up), Sense::LE, M, tag(d.name, l) + "_up"));
        h.bigm.push_back(p.add_row(std::move(dn), Sense::GE, -M, tag(d.name, l) + "_dn"));
      }
    }

    pbal[i].add(h.p_from[l], -1.0);
    qbal[i].add(h.q_from[l], -1.0);
    pbal[j].add(h.p_to[l], -1.0);
    qbal[j].add(h.q_to[l], -1.0);

    // voltage-consistency relaxation: c^2 + s^2 <= e_i e_j
    h.d_cone[l] = p.add_cone(
        {{{{h.c[l].id, 2.0}}, 0.0}, {{{h.s[l].id, 2.0}}, 0.0},
         {{{h.e[i].id, 1.0}, {h.e[j].id, -1.0}}, 0.0}},
        {{{h.e[i].id, 1.0}, {h.e[j].id, 1.0}}, 0.0}, tag("dcone:", l));

    if (sw_vars) {
      VarRef a = (*sw_vars)[l];
      h.bigm.push_back(
          p.add_row({{h.p_from[l].id, 1.0}, {a.id, -M}}, Sense::LE, 0.0, tag("pf_cap:", l)));
      h.bigm.push_back(
          p.add_row({{h.p_from[l].id, 1.0}, {a.id, M}}, Sense::GE, 0.0, tag("pf_cap_dn:", l)));
      h.bigm.push_back(
          p.add_row({{h.q_from[l].id, 1.0}, {a.id, -M}}, Sense::LE, 0.0, tag("qf_cap:", l)));
      h.bigm.push_back(
          p.add_row({{h.q_from[l].id, 1.0}, {a.id, M}}, Sense::GE, 0.0, tag("qf_cap_dn:", l)));
      h.bigm.push_back(
          p.add_row({{h.p_to[l].id, 1.0}, {a.id, -M}}, Sense::LE, 0.0, tag("pt_cap:", l)));
      h.bigm.push_back(
          p.add_row({{h.p_to[l].id, 1.0}, {a.id, M}}, Sense::GE, 0.0, tag("pt_cap_dn:", l)));
      h.bigm.push_back(
          p.add_row({{h.q_to[l].id, 1.0}, {a.id, -M}}, Sense::LE, 0.0, tag("qt_cap:", l)));
      h.bigm.push_back(
          p.add_row({{h.q_to[l].id, 1.0}, {a.id, M}}, Sense::GE, 0.0, tag("qt_cap_dn:", l)));
    }
    if (br.rate > 0.0) {
      ConicProgram::AffineRow head;
      if (sw_vars)
        head = {{{(*sw_vars)[l].id, br.rate}}, 0.0};
      else
        head = {{}, br.rate};
      h.cone_from[l] = p.add_cone(
          {{{{h.p_from[l].id, 1.0}}, 0.0}, {{{h.q_from[l].id, 1.0}}, 0.0}}, head,
          tag("scap_f:", l));
      h.cone_to[l] = p.add_cone(
          {{{{h.p_to[l].id, 1.0}}, 0.0}, {{{h.q_to[l].id, 1.0}}, 0.0}}, head, tag("scap_t:", l));
    }

    if (with_mce) {
      // small-angle coupling w ~ c * (th_i - th_j) through McCormick rows;
      // with switching, every angle-coupling row is released on open lines so
      // a = 0 matches removing the branch outright
      double tl = br.angle_min, tu = br.angle_max;
      double wlo = std::min(std::min(box.c_lo * tl, box.c_lo * tu),
                            std::min(box.c_hi * tl, box.c_hi * tu));
      double whi = std::max(std::max(box.c_lo * tl, box.c_lo * tu),
                            std::max(box.c_hi * tl, box.c_hi * tu));
      h.w[l] = p.add_var(wlo, whi, tag("w", l));
      VarRef ti = h.theta[i], tj = h.theta[j];
      auto mce_row = [&](double cb, double tb, Sense sense, const char* nm) {
        std::vector<LinTerm> lhs = {
            {h.w[l].id, 1.0}, {ti.id, -cb}, {tj.id, cb}, {h.c[l].id, -tb}};
        double rhs = -cb * tb;
        if (sw_vars) {
          double rel = (sense == Sense::GE ? -M : M);
          lhs.push_back({(*sw_vars)[l].id, rel});
          rhs += rel;
        }
        ConstraintRef cr = p.add_row(std::move(lhs), sense, rhs, tag(nm, l));
        if (sw_vars) h.bigm.push_back(cr);
        return cr;
      };
      h.mce.push_back(mce_row(box.c_lo, tl, Sense::GE, "mce1:"));
      h.mce.push_back(mce_row(box.c_hi, tu, Sense::GE, "mce2:"));
      h.mce.push_back(mce_row(box.c_hi, tl, Sense::LE, "mce3:"));
      h.mce.push_back(mce_row(box.c_lo, tu, Sense::LE, "mce4:"));
      if (!sw_vars) {
        p.add_row({{ti.id, 1.0}, {tj.id, -1.0}}, Sense::LE, tu, tag("ang_up:", l));
        p.add_row({{ti.id, 1.0}, {tj.id, -1.0}}, Sense::GE, tl, tag("ang_dn:", l));
        p.add_row({{h.s[l].id, 1.0}, {h.w[l].id, -1.0}}, Sense::EQ, 0.0, tag("sw_link:", l));
      } else {
        VarRef a = (*sw_vars)[l];
        h.bigm.push_back(p.add_row({{ti.id, 1.0}, {tj.id, -1.0}, {a.id, M}}, Sense::LE, tu + M,
                                   tag("ang_up:", l)));
        h.bigm.push_back(p.add_row({{ti.id, 1.0}, {tj.id, -1.0}, {a.id, -M}}, Sense::GE, tl - M,
                                   tag("ang_dn:", l)));
        h.bigm.push_back(
            p.add_row({{h.s[l].id, 1.0}, {h.w[l].id, -1.0}, {a.id, M}}, Sense::LE, M,
                      tag("sw_link_up:", l)));
        h.bigm.push_back(
            p.add_row({{h.s[l].id, 1.0}, {h.w[l].id, -1.0}, {a.id, -M}}, Sense::GE, -M,
                      tag("sw_link_dn:", l)));
      }
    }
  }

  h.p_balance.resize(nb);
  h.q_balance.resize(nb);
  for (int i = 0; i < nb; ++i) {
    h.p_balance[i] =
        p.add_row(pbal[i].terms(), Sense::EQ, prhs[i], tag("pbal", net.buses[i].id));
    h.q_balance[i] =
        p.add_row(qbal[i].terms(), Sense::EQ, qrhs[i], tag("qbal", net.buses[i].id));
  }
}

}  // namespace form_detail

inline ModelHandle build_socp_acopf(const Network& net, bool with_mce) {
  require_valid(net);
  ModelHandle h;
  h.kind = with_mce ? FormulationKind::SocpAcOpfMce : FormulationKind::SocpAcOpf;
  h.net = net;
  form_detail::build_socp_core(h, with_mce, nullptr, 0.0);
  return h;
}

inline ModelHandle build_ots_misocp(const Network& net, std::optional<int> budget,
                                    double big_m = 100.0) {
  using namespace form_detail;
  require_valid(net);
  check_budget(budget);
  if (big_m <= 0.0) throw std::invalid_argument("big_m must be positive");
  double max_rate = 0.0;
  for (const Branch& br : net.branches)
    if (br.status) max_rate = std::max(max_rate, br.rate);
  if (big_m <= max_rate)
    std::fprintf(stderr,
                 "warning: big_m %g is below the largest line rating %g pu; "
                 "the switching model may cut feasible flows\n",
                 big_m, max_rate);

  ModelHandle h;
  h.kind = FormulationKind::OtsMisocpMce;
  h.net = net;
  h.big_m = big_m;
  h.budget = budget;
  ConicProgram& p = h.program;

  int nl = net.n_branches();
  h.sw.resize(nl);
  int live = 0;
  for (int l = 0; l < nl; ++l) {
    const Branch& br = net.branches[l];
    if (!br.status) continue;
    ++live;
    h.sw[l] = p.add_var(0.0, 1.0, form_detail::tag("a", l), VarKind::Binary);
    if (!br.switchable) p.fix_var(h.sw[l], 1.0);
  }
  build_socp_core(h, true, &h.sw, big_m);
  if (budget) {
    RowAcc acc;
    for (int l = 0; l < nl; ++l)
      if (h.sw[l].valid()) acc.add(h.sw[l], -1.0);
    h.budget_row = p.add_row(acc.terms(), Sense::LE, double(*budget) - live, "budget");
  }
  return h;
}

inline DispatchSolution extract_dispatch(const ModelHandle& h, const ConicSolution& sol) {
  if (sol.status != SolveStatus::Optimal)
    throw std::invalid_argument(std::string("cannot extract dispatch from a ") +
                                to_string(sol.status) + " solution");
  const Network& net = h.net;
  int nb = net.n_buses(), nl = net.n_branches(), ng = net.n_generators();
  DispatchSolution d;
  d.formulation = h.kind;
  d.objective = sol.objective;
  d.pg.resize(ng, 0.0);
  d.qg.resize(ng, 0.0);
  for (int g = 0; g < ng; ++g) {
    d.pg[g] = value(sol, h.pg[g]);
    if (!h.qg.empty() && h.qg[g].valid()) d.qg[g] = value(sol, h.qg[g]);
  }
  d.e.assign(nb, 1.0);
  d.theta.assign(nb, 0.0);
  for (int i = 0; i < nb; ++i) {
    if (!h.e.empty() && h.e[i].valid()) d.e[i] = value(sol, h.e[i]);
    if (!h.theta.empty() && h.theta[i].valid()) d.theta[i] = value(sol, h.theta[i]);
  }

  d.open.assign(nl, false);
  for (int l = 0; l < nl; ++l) {
    if (!net.branches[l].status) {
      d.open[l] = true;
    } else if (!h.sw.empty() && h.sw[l].valid()) {
      d.open[l] = value(sol, h.sw[l]) < 0.5;
    }
  }

  d.p_from.assign(nl, 0.0);
  d.q_from.assign(nl, 0.0);
  d.p_to.assign(nl, 0.0);
  d.q_to.assign(nl, 0.0);
  for (int l = 0; l < nl; ++l) {
    const Branch& br = net.branches[l];
    if (!br.status) continue;
    if (!h.p_from.empty() && h.p_from[l].valid()) {
      d.p_from[l] = value(sol, h.p_from[l]);
      d.q_from[l] = value(sol, h.q_from[l]);
      d.p_to[l] = value(sol, h.p_to[l]);
      d.q_to[l] = value(sol, h.q_to[l]);
    } else if (!h.f.empty() && h.f[l].valid()) {
      d.p_from[l] = value(sol, h.f[l]);
      d.p_to[l] = -d.p_from[l];
    } else {
      auto [i, j] = h.ends[l];
      double flow = form_detail::dc_susceptance(br) *
                    (d.theta[i] - d.theta[j] - br.shift);
      d.p_from[l] = flow;
      d.p_to[l] = -flow;
    }
  }

  // The plain SOCP carries no angles; rebuild them from the per-line
  // cos/sin products by walking out from the slack bus.
  if (h.kind == FormulationKind::SocpAcOpf && h.slack >= 0) {
    std::vector<std::vector<std::pair<int, int>>> adj(nb);  // (branch, other end)
    for (int l = 0; l < nl; ++l) {
      if (!net.branches[l].status || d.open[l]) continue;
      auto [i, j] = h.ends[l];
      adj[i].push_back({l, j});
      adj[j].push_back({l, i});
    }
    std::vector<char> seen(nb, 0);
    std::queue<int> q;
    q.push(h.slack);
    seen[h.slack] = 1;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (auto [l, v] : adj[u]) {
        if (seen[v]) continue;
        seen[v] = 1;
        double ang = std::atan2(value(sol, h.s[l]), value(sol, h.c[l]));
        auto [i, j] = h.ends[l];
        d.theta[v] = (u == i) ? d.theta[u] - ang : d.theta[u] + ang;
        q.push(v);
      }
    }
  }
  return d;
}

inline ModelHandle warm_start(const ModelHandle& h, const DispatchSolution& hint) {
  const Network& net = h.net;
  size_t nb = net.buses.size(), nl = net.branches.size(), ng = net.generators.size();
  if (hint.pg.size() != ng || hint.theta.size() != nb || hint.e.size() != nb ||
      hint.open.size() != nl || hint.p_from.size() != nl)
    throw std::invalid_argument("warm start hint does not match the network dimensions");
  ModelHandle out = h;
  std::vector<double>& x = out.initial;
  x.assign(h.program.n_vars(), 0.0);
  for (int v = 0; v < h.program.n_vars(); ++v) {
    double lo = h.program.lb[v], hi = h.program.ub[v];
    if (std::isfinite(lo) && std::isfinite(hi)) x[v] = 0.5 * (lo + hi);
  }
  auto set = [&](VarRef v, double val) {
    if (v.valid()) x[v.id] = val;
  };
  for (size_t g = 0; g < ng; ++g) {
    set(h.pg[g], hint.pg[g]);
    if (!h.qg.empty()) set(h.qg[g], hint.qg.empty() ? 0.0 : hint.qg[g]);
  }
  for (size_t i = 0; i < nb; ++i) {
    if (!h.theta.empty()) set(h.theta[i], hint.theta[i]);
    if (!h.e.empty()) set(h.e[i], hint.e[i]);
  }
  for (size_t l = 0; l < nl; ++l) {
    if (!h.sw.empty()) set(h.sw[l], hint.open[l] ? 0.0 : 1.0);
    if (!h.f.empty()) set(h.f[l], hint.p_from[l]);
    if (!h.p_from.empty()) {
      set(h.p_from[l], hint.p_from[l]);
      set(h.q_from[l], hint.q_from[l]);
      set(h.p_to[l], hint.p_to[l]);
      set(h.q_to[l], hint.q_to[l]);
    }
    if (!h.c.empty() && h.c[l].valid()) {
      auto [i, j] = h.ends[l];
      double vi = std::sqrt(std::max(hint.e[i], 0.0));
      double vj = std::sqrt(std::max(hint.e[j], 0.0));
      double dth = hint.theta[i] - hint.theta[j];
      set(h.c[l], vi * vj * std::cos(dth));
      set(h.s[l], vi * vj * std::sin(dth));
      if (!h.w.empty()) set(h.w[l], vi * vj * std::sin(dth));
    }
  }
  return out;
}

}  // namespace gridopt
