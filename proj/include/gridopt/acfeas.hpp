// Newton-Raphson AC power flow in polar form, used to check whether a
// relaxation dispatch corresponds to an AC-feasible operating point.
// PV buses hold voltage until a generator Q limit binds, then drop to PQ
// with the injection pinned at the limit (standard practice).
#pragma once

#include <complex>
#include <queue>
#include <sstream>

#include <Eigen/Dense>

#include "gridopt/netmodel.hpp"

namespace gridopt {

// Dispatch handed to the power flow. pg is per generator (pu). qg is per
// generator and only matters for generators on PQ buses; empty means zero.
// v_mag is a per-bus voltage target used at PV and slack buses; empty means
// a flat 1.0 profile.
struct GenSetpoints {
  std::vector<double> pg;
  std::vector<double> qg;
  std::vector<double> v_mag;
};

struct PowerFlowResult {
  bool converged = false;
  int iterations = 0;
  std::vector<double> v_mag, v_ang;                // per bus, pu / rad
  std::vector<std::complex<double>> s_from, s_to;  // per branch, pu; 0 when open
  double mismatch_inf_norm = std::numeric_limits<double>::infinity();
  std::vector<char> open;  // per branch: excluded from this run
  std::string message;     // diagnostic when not converged
};

struct FeasibilityReport {
  struct Item {
    int index;         // bus or branch position in the network vectors
    double magnitude;  // amount past the limit (pu or rad)
  };
  std::vector<Item> voltage;  // |V| outside [v_min, v_max]
  std::vector<Item> thermal;  // apparent flow above rate
  std::vector<Item> angle;    // angle difference outside the branch box
  bool ok() const { return voltage.empty() && thermal.empty() && angle.empty(); }
  std::size_t total() const { return voltage.size() + thermal.size() + angle.size(); }
};

inline std::vector<int> open_indices(const std::vector<bool>& open) {
  std::vector<int> out;
  for (std::size_t l = 0; l < open.size(); ++l)
    if (open[l]) out.push_back(static_cast<int>(l));
  return out;
}

// Connected components of the bus graph after removing open_set (and any
// out-of-service branches). Components hold external bus ids, each sorted,
// ordered by their smallest member.
inline std::vector<std::vector<int>> island_check(const Network& net,
                                                  const std::vector<int>& open_set) {
  const int nb = static_cast<int>(net.buses.size());
  BusIndex bix(net);
  std::vector<char> open(net.branches.size(), 0);
  for (int l : open_set) {
    if (l < 0 || l >= static_cast<int>(net.branches.size()))
      throw std::out_of_range("open_set branch index out of range");
    open[l] = 1;
  }
  std::vector<std::vector<int>> adj(nb);
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    const Branch& br = net.branches[l];
    if (!br.status || open[l]) continue;
    int u = bix.at(br.from_bus), v = bix.at(br.to_bus);
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::vector<int> comp(nb, -1);
  std::vector<std::vector<int>> groups;
  for (int s = 0; s < nb; ++s) {
    if (comp[s] >= 0) continue;
    int id = static_cast<int>(groups.size());
    groups.emplace_back();
    std::queue<int> q;
    q.push(s);
    comp[s] = id;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      groups[id].push_back(net.buses[u].id);
      for (int v : adj[u])
        if (comp[v] < 0) {
          comp[v] = id;
          q.push(v);
        }
    }
  }
  for (auto& g : groups) std::sort(g.begin(), g.end());
  std::sort(groups.begin(), groups.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return groups;
}

namespace pf_detail {

struct BusRole {
  enum Kind { Slack, Pv, Pq } kind = Pq;
  double v_target = 1.0;
  double q_pinned = 0.0;  // total gen Q when dropped from PV to PQ, pu
  bool q_limited = false;
};

}  // namespace pf_detail

inline PowerFlowResult newton_power_flow(const Network& net, const GenSetpoints& sp,
                                         const std::vector<int>& open_set = {},
                                         double tol = 1e-8, int max_iter = 30) {
  const int nb = static_cast<int>(net.buses.size());
  const int nl = static_cast<int>(net.branches.size());
  const int ng = static_cast<int>(net.generators.size());
  if (static_cast<int>(sp.pg.size()) != ng)
    throw std::invalid_argument("setpoints: pg size does not match generator count");
  if (!sp.qg.empty() && static_cast<int>(sp.qg.size()) != ng)
    throw std::invalid_argument("setpoints: qg size does not match generator count");
  if (!sp.v_mag.empty() && static_cast<int>(sp.v_mag.size()) != nb)
    throw std::invalid_argument("setpoints: v_mag size does not match bus count");

  BusIndex bix(net);
  PowerFlowResult res;
  res.open.assign(nl, 0);
  for (int l : open_set) {
    if (l < 0 || l >= nl) throw std::out_of_range("open_set branch index out of range");
    res.open[l] = 1;
  }
  for (int l = 0; l < nl; ++l)
    if (!net.branches[l].status) res.open[l] = 1;

  // A dispatch that islands part of the grid cannot be priced or checked.
  std::vector<int> removed;
  for (int l = 0; l < nl; ++l)
    if (res.open[l]) removed.push_back(l);
  auto groups = island_check(net, removed);
  if (groups.size() > 1) {
    int slack_id = -1;
    for (const Bus& b : net.buses)
      if (b.kind == BusKind::Slack) slack_id = b.id;
    std::ostringstream os;
    os << "switched network is islanded; buses off the slack component:";
    for (const auto& g : groups) {
      if (std::find(g.begin(), g.end(), slack_id) != g.end()) continue;
      for (int id : g) os << ' ' << id;
    }
    throw std::runtime_error(os.str());
  }

  // Bus roles and specified injections.
  std::vector<pf_detail::BusRole> role(nb);
  std::vector<int> gens_at_count(nb, 0);
  std::vector<double> p_spec(nb, 0.0), q_spec(nb, 0.0);
  std::vector<double> q_lo(nb, 0.0), q_hi(nb, 0.0);
  for (int g = 0; g < ng; ++g) {
    const Generator& gen = net.generators[g];
    int i = bix.at(gen.bus);
    ++gens_at_count[i];
    p_spec[i] += sp.pg[g];
    q_spec[i] += sp.qg.empty() ? 0.0 : sp.qg[g];
    q_lo[i] += gen.q_min;
    q_hi[i] += gen.q_max;
  }
  for (int i = 0; i < nb; ++i) {
    const Bus& b = net.buses[i];
    p_spec[i] -= b.p_demand;
    q_spec[i] -= b.q_demand;
    double vt = sp.v_mag.empty() ? 1.0 : sp.v_mag[i];
    if (b.kind == BusKind::Slack) {
      role[i] = {pf_detail::BusRole::Slack, vt, 0.0, false};
    } else if (b.kind == BusKind::PV && gens_at_count[i] > 0) {
      role[i] = {pf_detail::BusRole::Pv, vt, 0.0, false};
    } else {
      role[i] = {pf_detail::BusRole::Pq, vt, 0.0, false};
    }
  }

  // Bus admittance matrix from the surviving branches plus bus shunts.
  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(nb, nb);
  for (int l = 0; l < nl; ++l) {
    if (res.open[l]) continue;
    const Branch& br = net.branches[l];
    BranchAdmittance a = branch_admittance(br);
    int f = bix.at(br.from_bus), t = bix.at(br.to_bus);
    Y(f, f) += a.yff;
    Y(f, t) += a.yft;
    Y(t, f) += a.ytf;
    Y(t, t) += a.ytt;
  }
  for (int i = 0; i < nb; ++i) Y(i, i) += std::complex<double>(net.buses[i].gs, net.buses[i].bs);

  Eigen::VectorXd vm(nb), va = Eigen::VectorXd::Zero(nb);
  for (int i = 0; i < nb; ++i)
    vm[i] = (role[i].kind == pf_detail::BusRole::Pq) ? 1.0 : role[i].v_target;

  auto injections = [&](Eigen::VectorXd& p, Eigen::VectorXd& q) {
    p.setZero(nb);
    q.setZero(nb);
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j) {
        double gij = Y(i, j).real(), bij = Y(i, j).imag();
        if (gij == 0.0 && bij == 0.0) continue;
        double th = va[i] - va[j];
        double ct = std::cos(th), st = std::sin(th);
        p[i] += vm[i] * vm[j] * (gij * ct + bij * st);
        q[i] += vm[i] * vm[j] * (gij * st - bij * ct);
      }
  };

  // One NR run over the current bus roles; returns false on a singular step.
  auto run_nr = [&]() -> bool {
    std::vector<int> ang_of, mag_of;  // unknown layout
    for (int i = 0; i < nb; ++i)
      if (role[i].kind != pf_detail::BusRole::Slack) ang_of.push_back(i);
    for (int i = 0; i < nb; ++i)
      if (role[i].kind == pf_detail::BusRole::Pq) mag_of.push_back(i);
    const int na = static_cast<int>(ang_of.size());
    const int nm = static_cast<int>(mag_of.size());
    const int nu = na + nm;

    Eigen::VectorXd pc(nb), qc(nb);
    for (int it = 0;; ++it) {
      injections(pc, qc);
      Eigen::VectorXd f(nu);
      for (int k = 0; k < na; ++k) f[k] = p_spec[ang_of[k]] - pc[ang_of[k]];
      for (int k = 0; k < nm; ++k) {
        int i = mag_of[k];
        double qs = role[i].q_limited ? role[i].q_pinned - net.buses[i].q_demand : q_spec[i];
        f[na + k] = qs - qc[i];
      }
      res.mismatch_inf_norm = (nu == 0) ? 0.0 : f.lpNorm<Eigen::Infinity>();
      if (res.mismatch_inf_norm <= tol) {
        res.converged = true;
        return true;
      }
      if (it >= max_iter) {
        res.converged = false;
        res.message = "iteration limit";
        return true;
      }
      ++res.iterations;

      // Polar-form Jacobian blocks.
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nu, nu);
      auto dp_dth = [&](int i, int j) {
        double gij = Y(i, j).real(), bij = Y(i, j).imag();
        double th = va[i] - va[j];
        if (i == j) return -qc[i] - vm[i] * vm[i] * Y(i, i).imag();
        return vm[i] * vm[j] * (gij * std::sin(th) - bij * std::cos(th));
      };
      auto dp_dv = [&](int i, int j) {
        double gij = Y(i, j).real(), bij = Y(i, j).imag();
        double th = va[i] - va[j];
        if (i == j) return pc[i] / vm[i] + vm[i] * Y(i, i).real();
        return vm[i] * (gij * std::cos(th) + bij * std::sin(th));
      };
      auto dq_dth = [&](int i, int j) {
        double gij = Y(i, j).real(), bij = Y(i, j).imag();
        double th = va[i] - va[j];
        if (i == j) return pc[i] - vm[i] * vm[i] * Y(i, i).real();
        return -vm[i] * vm[j] * (gij * std::cos(th) + bij * std::sin(th));
      };
      auto dq_dv = [&](int i, int j) {
        double gij = Y(i, j).real(), bij = Y(i, j).imag();
        double th = va[i] - va[j];
        if (i == j) return qc[i] / vm[i] - vm[i] * Y(i, i).imag();
        return vm[i] * (gij * std::sin(th) - bij * std::cos(th));
      };
      for (int r = 0; r < na; ++r)
        for (int c = 0; c < na; ++c) J(r, c) = dp_dth(ang_of[r], ang_of[c]);
      for (int r = 0; r < na; ++r)
        for (int c = 0; c < nm; ++c) J(r, na + c) = dp_dv(ang_of[r], mag_of[c]);
      for (int r = 0; r < nm; ++r)
        for (int c = 0; c < na; ++c) J(na + r, c) = dq_dth(mag_of[r], ang_of[c]);
      for (int r = 0; r < nm; ++r)
        for (int c = 0; c < nm; ++c) J(na + r, na + c) = dq_dv(mag_of[r], mag_of[c]);

      Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
      if (!lu.isInvertible()) {
        res.converged = false;
        res.message = "singular Jacobian at iteration " + std::to_string(it);
        return false;
      }
      Eigen::VectorXd dx = lu.solve(f);
      for (int k = 0; k < na; ++k) va[ang_of[k]] += dx[k];
      for (int k = 0; k < nm; ++k) vm[mag_of[k]] += dx[na + k];
    }
  };

  // Outer loop: solve, enforce generator Q limits at PV buses, repeat.
  const int max_pv_rounds = 6;
  for (int round = 0; round < max_pv_rounds; ++round) {
    if (!run_nr() || !res.converged) break;
    Eigen::VectorXd pc(nb), qc(nb);
    injections(pc, qc);
    bool switched = false;
    for (int i = 0; i < nb; ++i) {
      if (role[i].kind != pf_detail::BusRole::Pv) continue;
      double q_gen = qc[i] + net.buses[i].q_demand;
      if (q_gen < q_lo[i] - 1e-9 || q_gen > q_hi[i] + 1e-9) {
        role[i].kind = pf_detail::BusRole::Pq;
        role[i].q_limited = true;
        role[i].q_pinned = (q_gen < q_lo[i]) ? q_lo[i] : q_hi[i];
        switched = true;
      }
    }
    if (!switched) break;
    res.converged = false;  // re-solve with the new roles
    if (round == max_pv_rounds - 1) res.message = "generator Q-limit switching did not settle";
  }

  res.v_mag.assign(vm.data(), vm.data() + nb);
  res.v_ang.assign(va.data(), va.data() + nb);
  res.s_from.assign(nl, {0.0, 0.0});
  res.s_to.assign(nl, {0.0, 0.0});
  for (int l = 0; l < nl; ++l) {
    if (res.open[l]) continue;
    const Branch& br = net.branches[l];
    BranchAdmittance a = branch_admittance(br);
    int f = bix.at(br.from_bus), t = bix.at(br.to_bus);
    std::complex<double> vf = std::polar(vm[f], va[f]);
    std::complex<double> vt = std::polar(vm[t], va[t]);
    res.s_from[l] = vf * std::conj(a.yff * vf + a.yft * vt);
    res.s_to[l] = vt * std::conj(a.ytf * vf + a.ytt * vt);
  }
  return res;
}

inline FeasibilityReport feasibility_report(const PowerFlowResult& pf, const Network& net,
                                            double check_tol = 1e-4);

struct RecoveredPoint {
  PowerFlowResult pf;
  FeasibilityReport report;
  std::vector<double> targets;  // gen-bus voltage targets actually used
};

// Turns a dispatch into an AC operating point. Voltage targets come from
// the relaxation's e profile (flat when absent), but a relaxed solution can
// imply junction-bus voltages just past their cap once real physics applies;
// operators fix that by trimming generator setpoints, so shift all targets
// against the worst violation and re-run until the profile fits the band.
inline RecoveredPoint recover_operating_point(const Network& net, const std::vector<double>& pg,
                                              const std::vector<double>& e_profile = {},
                                              const std::vector<int>& open_set = {},
                                              double check_tol = 1e-4) {
  const int nb = static_cast<int>(net.buses.size());
  if (!e_profile.empty() && static_cast<int>(e_profile.size()) != nb)
    throw std::invalid_argument("recover_operating_point: e profile size mismatch");
  GenSetpoints sp;
  sp.pg = pg;
  sp.v_mag.resize(nb);
  for (int i = 0; i < nb; ++i) {
    double v = e_profile.empty() ? 1.0 : std::sqrt(std::max(0.0, e_profile[i]));
    sp.v_mag[i] = std::clamp(v, net.buses[i].v_min, net.buses[i].v_max);
  }
  RecoveredPoint out;
  const int max_rounds = 8;
  for (int round = 0;; ++round) {
    out.pf = newton_power_flow(net, sp, open_set);
    if (!out.pf.converged) {
      out.report = FeasibilityReport{};
      out.targets = sp.v_mag;
      return out;
    }
    out.report = feasibility_report(out.pf, net, check_tol);
    out.targets = sp.v_mag;
    if (out.report.voltage.empty() || round >= max_rounds) return out;
    double over = 0.0, under = 0.0;
    for (const auto& item : out.report.voltage) {
      const Bus& b = net.buses[item.index];
      if (out.pf.v_mag[item.index] > b.v_max)
        over = std::max(over, item.magnitude);
      else
        under = std::max(under, item.magnitude);
    }
    if (over > 0.0 && under > 0.0) return out;  // a uniform shift cannot fix both
    double shift = (over > 0.0 ? -1.0 : 1.0) * ((over > 0.0 ? over : under) + 1e-5);
    for (int i = 0; i < nb; ++i)
      sp.v_mag[i] = std::clamp(sp.v_mag[i] + shift, net.buses[i].v_min, net.buses[i].v_max);
  }
}

inline FeasibilityReport feasibility_report(const PowerFlowResult& pf, const Network& net,
                                            double check_tol) {
  if (!pf.converged)
    throw std::invalid_argument("feasibility_report needs a converged power flow");
  BusIndex bix(net);
  FeasibilityReport rep;
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const Bus& b = net.buses[i];
    double v = pf.v_mag[i];
    if (v < b.v_min - check_tol)
      rep.voltage.push_back({static_cast<int>(i), b.v_min - v});
    else if (v > b.v_max + check_tol)
      rep.voltage.push_back({static_cast<int>(i), v - b.v_max});
  }
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    const Branch& br = net.branches[l];
    if (pf.open[l]) continue;
    if (br.rate > 0.0) {
      double s = std::max(std::abs(pf.s_from[l]), std::abs(pf.s_to[l]));
      if (s > br.rate + check_tol) rep.thermal.push_back({static_cast<int>(l), s - br.rate});
    }
    double dth = pf.v_ang[bix.at(br.from_bus)] - pf.v_ang[bix.at(br.to_bus)];
    if (dth < br.angle_min - check_tol)
      rep.angle.push_back({static_cast<int>(l), br.angle_min - dth});
    else if (dth > br.angle_max + check_tol)
      rep.angle.push_back({static_cast<int>(l), dth - br.angle_max});
  }
  return rep;
}

}  // namespace gridopt
