// Market and congestion analytics computed from a solved model: nodal
// prices from balance duals, line congestion prices from flow-limit duals,
// congestion rent, and side-by-side comparison of two studies.
#pragma once

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "gridopt/formulations.hpp"

namespace gridopt {

constexpr double kFmpTol = 1e-4;  // $/MWh; below this a line counts as uncongested

// Locational marginal price per bus in $/MWh. Balance rows are written in
// per-unit, so their duals carry $/pu-h and divide by the MVA base.
inline std::vector<double> lmp(const ModelHandle& h, const ConicSolution& sol) {
  const int nb = h.net.n_buses();
  if (static_cast<int>(h.p_balance.size()) != nb)
    throw std::invalid_argument("model has no P-balance rows");
  std::vector<double> out(nb);
  for (int i = 0; i < nb; ++i) {
    const ConstraintRef& r = h.p_balance[i];
    if (!r.valid() || r.id >= static_cast<int>(sol.duals.size()))
      throw std::invalid_argument("missing P-balance dual");
    out[i] = sol.duals[r.id] / h.net.base_mva;
  }
  return out;
}

// Flowrate marginal price per line in $/MWh: the shadow price of the line's
// flow limit. DC models carry a signed box (upper minus lower dual); SOCP
// models carry one cone per end, whose head duals add. Unlimited and open
// lines price at zero.
inline std::vector<double> fmp(const ModelHandle& h, const ConicSolution& sol) {
  const int nl = h.net.n_branches();
  std::vector<double> out(nl, 0.0);
  auto dual = [&](const ConstraintRef& r) -> double {
    if (!r.valid()) return 0.0;
    if (r.id >= static_cast<int>(sol.duals.size()))
      throw std::invalid_argument("missing flow-limit dual");
    return sol.duals[r.id];
  };
  for (int l = 0; l < nl; ++l) {
    double v = 0.0;
    if (l < static_cast<int>(h.flow_up.size()) &&
        (h.flow_up[l].valid() || h.flow_dn[l].valid())) {
      v = dual(h.flow_up[l]) - dual(h.flow_dn[l]);
    } else if (l < static_cast<int>(h.cone_from.size())) {
      v = dual(h.cone_from[l]) + dual(h.cone_to[l]);
    }
    out[l] = v / h.net.base_mva;
  }
  return out;
}

// Congestion rent in $/h: what loads pay minus what generators are paid.
inline double congestion_rent(const std::vector<double>& lmp_per_bus,
                              const DispatchSolution& d, const Network& net) {
  BusIndex bix(net);
  double paid = 0.0, received = 0.0;
  for (int i = 0; i < net.n_buses(); ++i)
    paid += net.buses[i].p_demand * net.base_mva * lmp_per_bus[i];
  for (int g = 0; g < net.n_generators(); ++g)
    received += d.pg[g] * net.base_mva * lmp_per_bus[bix.at(net.generators[g].bus)];
  return paid - received;
}

// Total generation cost in $/h evaluated from the dispatch (pg in pu).
inline double total_cost(const DispatchSolution& d, const Network& net) {
  double cost = 0.0;
  for (int g = 0; g < net.n_generators(); ++g) {
    double mw = d.pg[g] * net.base_mva;
    const Generator& gen = net.generators[g];
    cost += gen.c2 * mw * mw + gen.c1 * mw + gen.c0;
  }
  return cost;
}

struct StudyReport {
  FormulationKind formulation{};
  double total_cost = 0.0;       // $/h
  double congestion_rent = 0.0;  // $/h
  double avg_lmp = 0.0;          // $/MWh
  double lmp_std = 0.0;          // $/MWh
  double avg_abs_fmp = 0.0;      // $/MWh over in-service lines
  std::vector<double> lmp;       // per bus, $/MWh
  std::vector<double> fmp;       // per line, $/MWh
  std::vector<int> congested_lines;
  std::vector<int> open_lines;
  double objective = 0.0;  // solver objective, $/h
  double runtime = 0.0;    // s
};

inline StudyReport study_report(const ModelHandle& h, const ConicSolution& sol,
                                const DispatchSolution& d, double fmp_tol = kFmpTol) {
  StudyReport r;
  r.formulation = h.kind;
  r.objective = sol.objective;
  r.runtime = sol.solve_time;
  r.total_cost = total_cost(d, h.net);
  r.lmp = lmp(h, sol);
  r.fmp = fmp(h, sol);
  r.congestion_rent = congestion_rent(r.lmp, d, h.net);
  const int nb = h.net.n_buses(), nl = h.net.n_branches();
  for (double v : r.lmp) r.avg_lmp += v;
  r.avg_lmp /= nb;
  for (double v : r.lmp) r.lmp_std += (v - r.avg_lmp) * (v - r.avg_lmp);
  r.lmp_std = std::sqrt(r.lmp_std / nb);
  int live = 0;
  for (int l = 0; l < nl; ++l) {
    if (l < static_cast<int>(d.open.size()) && d.open[l]) {
      r.open_lines.push_back(l);
      continue;
    }
    ++live;
    r.avg_abs_fmp += std::abs(r.fmp[l]);
    if (std::abs(r.fmp[l]) > fmp_tol) r.congested_lines.push_back(l);
  }
  if (live > 0) r.avg_abs_fmp /= live;
  return r;
}

// Side-by-side table of a nominal study against a switching study, with
// percentage deltas. Missing OTS entries render as dashes.
struct ComparisonTable {
  StudyReport nominal;
  bool has_ots = false;
  StudyReport ots;
};

inline ComparisonTable compare(const StudyReport& nominal, const StudyReport& ots) {
  return {nominal, true, ots};
}
inline ComparisonTable compare(const StudyReport& nominal) { return {nominal, false, {}}; }

inline std::string render(const ComparisonTable& t) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  auto pct = [&](double a, double b) -> std::string {
    if (std::abs(a) < 1e-12) return "n/a";
    std::ostringstream p;
    p.setf(std::ios::fixed);
    p << std::setprecision(2) << 100.0 * (b - a) / std::abs(a) << "%";
    return p.str();
  };
  auto row = [&](const char* name, double a, double b, int prec) {
    os << std::left << std::setw(28) << name << std::right << std::setw(12)
       << std::setprecision(prec) << a;
    if (t.has_ots)
      os << std::setw(12) << std::setprecision(prec) << b << "  (" << pct(a, b) << ")";
    else
      os << std::setw(12) << "-";
    os << '\n';
  };
  os << std::left << std::setw(28) << "" << std::right << std::setw(12) << "nominal"
     << std::setw(12) << (t.has_ots ? "switched" : "-") << '\n';
  row("total cost ($/h)", t.nominal.total_cost, t.ots.total_cost, 2);
  row("congestion rent ($/h)", t.nominal.congestion_rent, t.ots.congestion_rent, 2);
  row("avg LMP ($/MWh)", t.nominal.avg_lmp, t.ots.avg_lmp, 2);
  row("avg |FMP| ($/MWh)", t.nominal.avg_abs_fmp, t.ots.avg_abs_fmp, 4);
  row("LMP std dev ($/MWh)", t.nominal.lmp_std, t.ots.lmp_std, 3);
  os << std::left << std::setw(28) << "congested lines" << std::right << std::setw(12)
     << t.nominal.congested_lines.size();
  if (t.has_ots)
    os << std::setw(12) << t.ots.congested_lines.size();
  else
    os << std::setw(12) << "-";
  os << '\n';
  os << std::left << std::setw(28) << "open lines" << std::right << std::setw(12)
     << t.nominal.open_lines.size();
  if (t.has_ots)
    os << std::setw(12) << t.ots.open_lines.size();
  else
    os << std::setw(12) << "-";
  os << '\n';
  return os.str();
}

}  // namespace gridopt
