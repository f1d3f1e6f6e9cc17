// Batch front-end for dispatch studies. Three subcommands:
//
//   run        solve one formulation, verify it against a Newton power flow,
//              print a study table, and optionally write a JSON report.
//   compare    run a set of formulations on one case and tabulate runtime,
//              objective, and optimality gap side by side.
//   ots-study  nominal dispatch vs switching-optimized dispatch, with an
//              optional budget sweep.
//
// Gap semantics in compare mode: gap_vs_best_bound measures each objective
// against the tightest lower bound the convex runs establish. Fixed-topology
// rows use the best SOCP relaxation objective; switching rows use the MISOCP
// best bound. A nonconvex reference solver would give the true optimum
// instead; this tool does not ship one, so the gap is relative to the bound.
//
// Exit codes: 0 solved, 1 bad input or usage, 2 model infeasible or
// unbounded, 3 a limit was hit (time, nodes) or the solver stopped without a
// verdict.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gridopt/acfeas.hpp"
#include "gridopt/caseio.hpp"
#include "gridopt/conic.hpp"
#include "gridopt/formulations.hpp"
#include "gridopt/metrics.hpp"
#include "gridopt/mibb.hpp"
#include "gridopt/netmodel.hpp"

namespace {

using nlohmann::ordered_json;
namespace go = gridopt;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

go::Network load_case(const std::string& path) {
  auto ends_with = [&](const char* suf) {
    std::string s(suf);
    return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with(".json")) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open case file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return go::parse_json(ss.str());
  }
  return go::load_matpower_file(path);
}

std::optional<go::FormulationKind> kind_from_name(const std::string& name) {
  using K = go::FormulationKind;
  if (name == "dc") return K::DcOpf;
  if (name == "dc-ots") return K::DcOts;
  if (name == "socp") return K::SocpAcOpf;
  if (name == "socp-mce") return K::SocpAcOpfMce;
  if (name == "ots-misocp") return K::OtsMisocpMce;
  return std::nullopt;
}

bool is_switching(go::FormulationKind k) {
  return k == go::FormulationKind::DcOts || k == go::FormulationKind::OtsMisocpMce;
}

// "none" lifts the budget; otherwise a non-negative count of open lines.
std::optional<int> parse_budget_token(const std::string& tok) {
  if (tok == "none") return std::nullopt;
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(tok, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != tok.size() || v < 0)
    throw std::runtime_error("--nsw expects a non-negative integer or 'none', got '" + tok + "'");
  return v;
}

std::vector<std::optional<int>> parse_budget_list(const std::string& arg) {
  std::vector<std::optional<int>> out;
  std::stringstream ss(arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_budget_token(tok));
  if (out.empty()) throw std::runtime_error("--nsw expects at least one value");
  return out;
}

// Switching candidates. The case loader already marks every in-service
// non-transformer branch; a sidecar file narrows that to an explicit list.
void mark_switchable(go::Network& net, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open switchable list: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  net = go::load_switchable(net, ss.str());
}

struct RunOutcome {
  std::string status = "not_run";
  int severity = 1;  // exit-code contribution: 0 solved, 2 infeasible, 3 limits
  bool have_solution = false;
  bool have_prices = false;
  go::DispatchSolution d;
  go::StudyReport rep;
  double best_bound = kNaN;  // branch-and-bound runs only
  double mip_gap = kNaN;
  long long nodes = -1;
  std::vector<double> incumbent_primal;  // for warm-starting a later run
  std::string note;
};

int severity_of(go::SolveStatus s) {
  switch (s) {
    case go::SolveStatus::Optimal: return 0;
    case go::SolveStatus::Infeasible:
    case go::SolveStatus::Unbounded: return 2;
    default: return 3;  // time limit or no verdict
  }
}

int severity_of(go::MibbStatus s) {
  switch (s) {
    case go::MibbStatus::Optimal: return 0;
    case go::MibbStatus::Infeasible: return 2;
    default: return 3;  // open gap, node limit, or time limit
  }
}

go::ModelHandle build_model(const go::Network& net, go::FormulationKind k,
                            std::optional<int> nsw, double big_m) {
  using K = go::FormulationKind;
  switch (k) {
    case K::DcOpf: return go::build_dc_opf(net);
    case K::DcOts: return go::build_dc_ots(net, nsw, big_m);
    case K::SocpAcOpf: return go::build_socp_acopf(net, false);
    case K::SocpAcOpfMce: return go::build_socp_acopf(net, true);
    case K::OtsMisocpMce: return go::build_ots_misocp(net, nsw, big_m);
  }
  throw std::logic_error("unknown formulation");
}

RunOutcome solve_formulation(const go::Network& net, go::FormulationKind kind,
                             std::optional<int> nsw, double big_m, double time_limit,
                             const std::vector<double>* hint = nullptr) {
  RunOutcome out;
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  go::ModelHandle h = build_model(net, kind, nsw, big_m);
  if (!is_switching(kind)) {
    go::SolveOptions so;
    if (time_limit > 0) so.time_limit = time_limit;
    auto sol = go::solve_continuous(h.program, so);
    out.status = go::to_string(sol.status);
    out.severity = severity_of(sol.status);
    if (!sol.message.empty()) out.note = sol.message;
    if (sol.status == go::SolveStatus::Optimal) {
      out.d = go::extract_dispatch(h, sol);
      out.rep = go::study_report(h, sol, out.d);
      out.have_solution = out.have_prices = true;
    }
    out.rep.runtime = elapsed();
    return out;
  }

  go::MibbOptions mo;
  if (time_limit > 0) mo.time_limit = time_limit;
  if (hint && !hint->empty()) mo.incumbent_hint = *hint;
  auto res = go::solve_misocp(h.program, mo);
  out.status = go::to_string(res.status);
  out.severity = severity_of(res.status);
  out.best_bound = res.best_bound;
  out.mip_gap = res.gap;
  out.nodes = res.nodes_explored;
  if (!res.incumbent.primal.empty()) {
    out.incumbent_primal = res.incumbent.primal;
    try {
      auto priced = go::resolve_incumbent_duals(h.program, res.incumbent.primal);
      out.d = go::extract_dispatch(h, priced);
      out.rep = go::study_report(h, priced, out.d);
      out.have_prices = true;
    } catch (const std::exception& e) {
      // Keep the dispatch even when the pricing re-solve fails.
      out.d = go::extract_dispatch(h, res.incumbent);
      out.rep.formulation = h.kind;
      out.rep.objective = res.incumbent.objective;
      out.rep.total_cost = go::total_cost(out.d, net);
      out.rep.open_lines = go::open_indices(out.d.open);
      out.note = std::string("prices unavailable: ") + e.what();
    }
    out.have_solution = true;
  }
  out.rep.runtime = elapsed();
  return out;
}

struct AcCheck {
  bool attempted = false;
  bool converged = false;
  bool feasible = false;
  int iterations = 0;
  double mismatch = kNaN;
  go::FeasibilityReport report;
  std::string message;
};

AcCheck verify_ac(const go::Network& net, const go::DispatchSolution& d) {
  AcCheck ac;
  ac.attempted = true;
  try {
    auto rec = go::recover_operating_point(net, d.pg, d.e, go::open_indices(d.open));
    ac.converged = rec.pf.converged;
    ac.iterations = rec.pf.iterations;
    ac.mismatch = rec.pf.mismatch_inf_norm;
    ac.report = rec.report;
    ac.feasible = rec.pf.converged && rec.report.ok();
    if (!rec.pf.converged) ac.message = rec.pf.message;
  } catch (const std::exception& e) {
    ac.message = e.what();  // islanding or a malformed setpoint
  }
  return ac;
}

std::string ac_summary(const AcCheck& ac) {
  if (!ac.attempted) return "ac check: skipped (no solution)";
  if (!ac.converged) return "ac check: power flow failed (" + ac.message + ")";
  char buf[192];
  if (ac.feasible) {
    std::snprintf(buf, sizeof buf,
                  "ac check: feasible (newton converged in %d iterations, max mismatch %.2e pu)",
                  ac.iterations, ac.mismatch);
    return buf;
  }
  double worst = 0.0;
  for (const auto* list : {&ac.report.voltage, &ac.report.thermal, &ac.report.angle})
    for (const auto& it : *list) worst = std::max(worst, it.magnitude);
  std::snprintf(buf, sizeof buf,
                "ac check: %zu voltage, %zu thermal, %zu angle violations (worst %.3e)",
                ac.report.voltage.size(), ac.report.thermal.size(), ac.report.angle.size(),
                worst);
  return buf;
}

// --- JSON report pieces (report_version 1) ---

ordered_json study_json(const RunOutcome& out) {
  const go::StudyReport& r = out.rep;
  ordered_json j;
  j["formulation"] = go::to_string(r.formulation);
  j["objective"] = r.objective;
  j["total_cost"] = r.total_cost;
  if (out.have_prices) {
    j["congestion_rent"] = r.congestion_rent;
    j["avg_lmp"] = r.avg_lmp;
    j["lmp_std"] = r.lmp_std;
    j["avg_abs_fmp"] = r.avg_abs_fmp;
    j["congested_lines"] = r.congested_lines;
  }
  j["open_lines"] = r.open_lines;
  if (out.have_prices) {
    j["lmp"] = r.lmp;
    j["fmp"] = r.fmp;
  }
  j["runtime_s"] = r.runtime;
  return j;
}

ordered_json dispatch_json(const go::DispatchSolution& d) {
  ordered_json j;
  j["pg"] = d.pg;
  j["qg"] = d.qg;
  j["e"] = d.e;
  j["theta"] = d.theta;
  j["p_from"] = d.p_from;
  j["q_from"] = d.q_from;
  j["p_to"] = d.p_to;
  j["q_to"] = d.q_to;
  j["open"] = d.open;
  return j;
}

ordered_json items_json(const std::vector<go::FeasibilityReport::Item>& items) {
  ordered_json arr = ordered_json::array();
  for (const auto& it : items) arr.push_back({{"index", it.index}, {"amount", it.magnitude}});
  return arr;
}

ordered_json ac_json(const AcCheck& ac) {
  ordered_json j;
  j["checked"] = ac.attempted;
  j["converged"] = ac.converged;
  j["feasible"] = ac.feasible;
  if (ac.converged) {
    j["iterations"] = ac.iterations;
    j["max_mismatch"] = ac.mismatch;
    j["violations"] = {{"voltage", items_json(ac.report.voltage)},
                       {"thermal", items_json(ac.report.thermal)},
                       {"angle", items_json(ac.report.angle)}};
  }
  if (!ac.message.empty()) j["message"] = ac.message;
  return j;
}

void add_mip_fields(ordered_json& j, const RunOutcome& out) {
  if (std::isnan(out.best_bound)) return;
  j["best_bound"] = out.best_bound;
  j["mip_gap"] = out.mip_gap;
  j["nodes"] = out.nodes;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

std::string budget_str(const std::optional<int>& b) {
  return b ? std::to_string(*b) : std::string("none");
}

// --- run ---

struct CommonArgs {
  std::string case_path;
  std::string nsw = "none";
  double big_m = 100.0;
  double time_limit = 0.0;  // seconds; 0 = unlimited
  std::string switchable_path;
  std::string out_path;
  std::string csv_path;
};

int cmd_run(const CommonArgs& a, const std::string& formulation) {
  auto kind = kind_from_name(formulation);
  if (!kind) throw std::runtime_error("unknown formulation: " + formulation);
  go::Network net = load_case(a.case_path);
  if (is_switching(*kind)) mark_switchable(net, a.switchable_path);
  std::optional<int> nsw = parse_budget_token(a.nsw);

  RunOutcome out = solve_formulation(net, *kind, nsw, a.big_m, a.time_limit);
  AcCheck ac;
  if (out.have_solution) ac = verify_ac(net, out.d);

  std::printf("case: %s  (%zu buses, %zu branches, %zu generators)\n", a.case_path.c_str(),
              net.buses.size(), net.branches.size(), net.generators.size());
  std::printf("formulation: %s\n", formulation.c_str());
  std::printf("status: %s\n", out.status.c_str());
  if (!out.note.empty()) std::printf("note: %s\n", out.note.c_str());
  if (out.have_solution) {
    if (!std::isnan(out.mip_gap) && out.mip_gap > 1e-12)
      std::printf("bound: %.6f  gap: %.3e\n", out.best_bound, out.mip_gap);
    std::printf("\n%s\n", out.have_prices
                              ? go::render(go::compare(out.rep)).c_str()
                              : ("objective: " + std::to_string(out.rep.objective)).c_str());
    std::printf("%s\n", ac_summary(ac).c_str());
  }

  if (!a.out_path.empty()) {
    ordered_json report;
    report["report_version"] = 1;
    report["command"] = "run";
    report["case"] = a.case_path;
    report["formulation"] = formulation;
    if (is_switching(*kind)) {
      report["nsw"] = nsw ? ordered_json(*nsw) : ordered_json(nullptr);
      report["big_m"] = a.big_m;
    }
    report["status"] = out.status;
    add_mip_fields(report, out);
    if (!out.note.empty()) report["note"] = out.note;
    if (out.have_solution) {
      report["summary"] = study_json(out);
      report["dispatch"] = dispatch_json(out.d);
      report["ac_check"] = ac_json(ac);
    }
    write_file(a.out_path, report.dump(2) + "\n");
  }

  if (!a.csv_path.empty() && out.have_prices) {
    std::ostringstream csv;
    csv << "series,index,value\n";
    char buf[64];
    for (std::size_t b = 0; b < out.rep.lmp.size(); ++b) {
      std::snprintf(buf, sizeof buf, "%.10g", out.rep.lmp[b]);
      csv << "lmp," << net.buses[b].id << ',' << buf << '\n';
    }
    for (std::size_t l = 0; l < out.rep.fmp.size(); ++l) {
      std::snprintf(buf, sizeof buf, "%.10g", out.rep.fmp[l]);
      csv << "fmp," << l << ',' << buf << '\n';
    }
    write_file(a.csv_path, csv.str());
  }
  return out.severity;
}

// --- compare ---

struct CompareRow {
  std::string name;
  std::optional<go::FormulationKind> kind;  // empty: needs a nonconvex solver
  RunOutcome out;
  AcCheck ac;
  double gap = kNaN;
};

int cmd_compare(const CommonArgs& a, const std::vector<std::string>& formulations, int workers) {
  go::Network net = load_case(a.case_path);
  mark_switchable(net, a.switchable_path);
  std::optional<int> nsw = parse_budget_token(a.nsw);

  std::vector<CompareRow> rows;
  if (formulations.empty()) {
    // Full study set; rows without a kind are listed so the lineup stays
    // visible, but need a nonconvex solver this tool does not ship.
    rows = {{"dc", go::FormulationKind::DcOpf, {}, {}, kNaN},
            {"acopf", std::nullopt, {}, {}, kNaN},
            {"socp", go::FormulationKind::SocpAcOpf, {}, {}, kNaN},
            {"socp-mce", go::FormulationKind::SocpAcOpfMce, {}, {}, kNaN},
            {"dc-ots", go::FormulationKind::DcOts, {}, {}, kNaN},
            {"acopf-ots", std::nullopt, {}, {}, kNaN},
            {"socp-ots-bilinear", std::nullopt, {}, {}, kNaN},
            {"socp-ots-bigm", std::nullopt, {}, {}, kNaN},
            {"ots-misocp", go::FormulationKind::OtsMisocpMce, {}, {}, kNaN}};
  } else {
    for (const auto& name : formulations) {
      auto k = kind_from_name(name);
      if (!k) throw std::runtime_error("unknown formulation: " + name);
      rows.push_back({name, k, {}, {}, kNaN});
    }
  }

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < rows.size();) {
      auto& row = rows[i];
      if (!row.kind) {
        row.out.status = "unsupported: requires nonconvex solver";
        row.out.severity = 0;
        continue;
      }
      row.out = solve_formulation(net, *row.kind, nsw, a.big_m, a.time_limit);
      if (row.out.have_solution) row.ac = verify_ac(net, row.out.d);
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  // Tightest lower bounds established by the convex runs, per problem class.
  double fixed_bound = -std::numeric_limits<double>::infinity();
  double switch_bound = -std::numeric_limits<double>::infinity();
  for (const auto& row : rows) {
    if (!row.kind || !row.out.have_solution) continue;
    if (*row.kind == go::FormulationKind::SocpAcOpf ||
        *row.kind == go::FormulationKind::SocpAcOpfMce)
      fixed_bound = std::max(fixed_bound, row.out.rep.objective);
    if (*row.kind == go::FormulationKind::OtsMisocpMce)
      switch_bound = std::max(switch_bound, std::isnan(row.out.best_bound)
                                                ? row.out.rep.objective
                                                : row.out.best_bound);
  }
  for (auto& row : rows) {
    if (!row.kind || !row.out.have_solution) continue;
    double base = is_switching(*row.kind) ? switch_bound : fixed_bound;
    if (!std::isfinite(base)) base = row.out.rep.objective;  // gap 0 vs itself
    row.gap = std::abs(base) > 1e-12 ? (row.out.rep.objective - base) / std::abs(base)
                                     : row.out.rep.objective - base;
  }

  std::printf("case: %s   nsw: %s   big_m: %g\n\n", a.case_path.c_str(),
              budget_str(nsw).c_str(), a.big_m);
  std::printf("%-18s %10s %14s %12s %-11s %s\n", "formulation", "runtime_s", "objective",
              "gap_vs_bound", "ac_feasible", "status");
  std::ostringstream csv;
  csv << "formulation,runtime_s,objective,gap_vs_best_bound,ac_feasible,status\n";
  for (const auto& row : rows) {
    char rt[32] = "", obj[32] = "", gap[32] = "";
    const char* feas = "";
    if (row.out.have_solution) {
      std::snprintf(rt, sizeof rt, "%.3f", row.out.rep.runtime);
      std::snprintf(obj, sizeof obj, "%.6f", row.out.rep.objective);
      std::snprintf(gap, sizeof gap, "%.3e", row.gap);
      feas = row.ac.feasible ? "yes" : "no";
    }
    std::printf("%-18s %10s %14s %12s %-11s %s\n", row.name.c_str(), rt, obj, gap, feas,
                row.out.status.c_str());
    csv << row.name << ',' << rt << ',' << obj << ',' << gap << ',' << feas << ','
        << row.out.status << '\n';
  }
  if (!a.csv_path.empty()) write_file(a.csv_path, csv.str());

  if (!a.out_path.empty()) {
    ordered_json report;
    report["report_version"] = 1;
    report["command"] = "compare";
    report["case"] = a.case_path;
    report["nsw"] = nsw ? ordered_json(*nsw) : ordered_json(nullptr);
    report["big_m"] = a.big_m;
    ordered_json arr = ordered_json::array();
    for (const auto& row : rows) {
      ordered_json j;
      j["formulation"] = row.name;
      j["status"] = row.out.status;
      if (row.out.have_solution) {
        j["runtime_s"] = row.out.rep.runtime;
        j["objective"] = row.out.rep.objective;
        j["gap_vs_best_bound"] = row.gap;
        j["ac_feasible"] = row.ac.feasible;
        add_mip_fields(j, row.out);
      }
      if (!row.out.note.empty()) j["note"] = row.out.note;
      arr.push_back(std::move(j));
    }
    report["rows"] = std::move(arr);
    write_file(a.out_path, report.dump(2) + "\n");
  }

  int severity = 0;
  for (const auto& row : rows) {
    if (!row.kind) continue;
    if (row.out.severity == 2) return 2;
    severity = std::max(severity, row.out.severity);
  }
  return severity;
}

// --- ots-study ---

int cmd_ots_study(const CommonArgs& a) {
  go::Network net = load_case(a.case_path);
  mark_switchable(net, a.switchable_path);
  auto budgets = parse_budget_list(a.nsw);

  RunOutcome nominal =
      solve_formulation(net, go::FormulationKind::SocpAcOpfMce, std::nullopt, a.big_m,
                        a.time_limit);
  AcCheck nominal_ac;
  if (nominal.have_solution) nominal_ac = verify_ac(net, nominal.d);
  if (!nominal.have_solution) {
    std::fprintf(stderr, "nominal dispatch did not solve: %s\n", nominal.status.c_str());
    return nominal.severity == 0 ? 3 : nominal.severity;
  }

  struct StudyRun {
    std::optional<int> budget;
    RunOutcome out;
    AcCheck ac;
  };
  std::vector<StudyRun> runs;
  std::vector<double> hint;
  for (const auto& b : budgets) {
    StudyRun run;
    run.budget = b;
    run.out = solve_formulation(net, go::FormulationKind::OtsMisocpMce, b, a.big_m,
                                a.time_limit, hint.empty() ? nullptr : &hint);
    if (run.out.have_solution) {
      run.ac = verify_ac(net, run.out.d);
      hint = run.out.incumbent_primal;  // plans stay feasible as the budget grows
    }
    runs.push_back(std::move(run));
  }

  std::printf("case: %s   big_m: %g\n\n", a.case_path.c_str(), a.big_m);
  std::ostringstream csv;
  csv << "budget,status,objective,total_cost,congestion_rent,avg_lmp,lmp_std,avg_abs_fmp,"
         "open_lines,ac_feasible\n";
  auto csv_row = [&](const std::string& label, const RunOutcome& out, const AcCheck& ac) {
    csv << label << ',' << out.status << ',';
    if (out.have_solution) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%zu,%s", out.rep.objective,
                    out.rep.total_cost, out.rep.congestion_rent, out.rep.avg_lmp,
                    out.rep.lmp_std, out.rep.avg_abs_fmp, out.rep.open_lines.size(),
                    ac.feasible ? "yes" : "no");
      csv << buf;
    } else {
      csv << ",,,,,,,";
    }
    csv << '\n';
  };
  csv_row("nominal", nominal, nominal_ac);
  for (const auto& run : runs) csv_row(budget_str(run.budget), run.out, run.ac);

  if (runs.size() == 1 && runs[0].out.have_prices) {
    std::printf("%s\n", go::render(go::compare(nominal.rep, runs[0].out.rep)).c_str());
    std::printf("nominal   %s\n", ac_summary(nominal_ac).c_str());
    std::printf("switched  %s\n", ac_summary(runs[0].ac).c_str());
  } else {
    std::printf("%-8s %-14s %14s %14s %12s %6s %s\n", "budget", "status", "objective",
                "total_cost", "rent", "open", "ac");
    auto table_row = [&](const std::string& label, const RunOutcome& out, const AcCheck& ac) {
      if (out.have_solution)
        std::printf("%-8s %-14s %14.4f %14.4f %12.4f %6zu %s\n", label.c_str(),
                    out.status.c_str(), out.rep.objective, out.rep.total_cost,
                    out.rep.congestion_rent, out.rep.open_lines.size(),
                    ac.feasible ? "yes" : "no");
      else
        std::printf("%-8s %-14s\n", label.c_str(), out.status.c_str());
    };
    table_row("nominal", nominal, nominal_ac);
    for (const auto& run : runs) table_row(budget_str(run.budget), run.out, run.ac);
  }

  if (!a.csv_path.empty()) write_file(a.csv_path, csv.str());

  if (!a.out_path.empty()) {
    ordered_json report;
    report["report_version"] = 1;
    report["command"] = "ots-study";
    report["case"] = a.case_path;
    report["big_m"] = a.big_m;
    ordered_json nom;
    nom["status"] = nominal.status;
    nom["summary"] = study_json(nominal);
    nom["ac_check"] = ac_json(nominal_ac);
    report["nominal"] = std::move(nom);
    ordered_json arr = ordered_json::array();
    for (const auto& run : runs) {
      ordered_json j;
      j["nsw"] = run.budget ? ordered_json(*run.budget) : ordered_json(nullptr);
      j["status"] = run.out.status;
      add_mip_fields(j, run.out);
      if (!run.out.note.empty()) j["note"] = run.out.note;
      if (run.out.have_solution) {
        j["summary"] = study_json(run.out);
        j["ac_check"] = ac_json(run.ac);
      }
      arr.push_back(std::move(j));
    }
    report["runs"] = std::move(arr);
    write_file(a.out_path, report.dump(2) + "\n");
  }

  int severity = nominal.severity;
  for (const auto& run : runs) {
    if (run.out.severity == 2) return 2;
    severity = std::max(severity, run.out.severity);
  }
  return severity;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dispatch studies: DC and SOCP optimal power flow with transmission switching"};
  app.require_subcommand(1);

  CommonArgs run_a, cmp_a, study_a;
  std::string run_formulation = "dc";
  std::vector<std::string> cmp_formulations;
  int workers = 1;

  auto add_common = [](CLI::App* cmd, CommonArgs& a, bool budgets_list) {
    cmd->add_option("--case", a.case_path, "case file (.m or .json)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--nsw", a.nsw,
                    budgets_list ? "switching budget(s), comma separated; 'none' lifts the cap"
                                 : "switching budget; 'none' lifts the cap")
        ->capture_default_str();
    cmd->add_option("--big-m", a.big_m, "big-M constant for switching rows")
        ->capture_default_str();
    cmd->add_option("--time-limit", a.time_limit, "wall-clock limit per solve, seconds");
    cmd->add_option("--switchable", a.switchable_path,
                    "sidecar listing switchable branch positions, one per line "
                    "(default: in-service non-transformer branches)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", a.out_path, "write a JSON report here");
    cmd->add_option("--csv", a.csv_path, "write CSV output here");
  };

  CLI::App* run_cmd = app.add_subcommand("run", "solve one formulation and report the dispatch");
  add_common(run_cmd, run_a, false);
  run_cmd->add_option("--formulation", run_formulation,
                      "one of dc, dc-ots, socp, socp-mce, ots-misocp")
      ->capture_default_str();

  CLI::App* cmp_cmd =
      app.add_subcommand("compare", "run several formulations and tabulate objective gaps");
  add_common(cmp_cmd, cmp_a, false);
  cmp_cmd->add_option("--formulation", cmp_formulations,
                      "formulations to run (repeatable; default: the full study set)");
  cmp_cmd->add_option("--workers", workers, "solve rows in this many threads")
      ->check(CLI::Range(1, 64));

  CLI::App* study_cmd = app.add_subcommand(
      "ots-study", "nominal dispatch vs switching-optimized dispatch, with budget sweeps");
  add_common(study_cmd, study_a, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run_a, run_formulation);
    if (cmp_cmd->parsed()) return cmd_compare(cmp_a, cmp_formulations, workers);
    if (study_cmd->parsed()) return cmd_ots_study(study_a);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
