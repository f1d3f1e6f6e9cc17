#include <catch2/catch_amalgamated.hpp>

#include <gridopt/acfeas.hpp>
#include <gridopt/caseio.hpp>
#include <gridopt/formulations.hpp>
#include <gridopt/ipm.hpp>

using namespace gridopt;

namespace {

// Independent oracle for the 2-bus lossless case: with V1 = 1 fixed and a
// purely active load p at bus 2, the Q equation gives V2 = cos(th) and the
// P equation collapses to sin(2 th) / (2 x) = p. Bisect that scalar.
double two_bus_angle_oracle(double x, double p) {
  auto g = [&](double th) { return std::sin(2.0 * th) / (2.0 * x) + p; };
  double lo = -0.7, hi = 0.0;  // g(lo) < 0 < g(hi) for the cases used here
  REQUIRE(g(lo) < 0.0);
  REQUIRE(g(hi) > 0.0);
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Network two_bus_pf(double x, double pload, double qload) {
  Network net;
  net.buses.push_back({1, BusKind::Slack, 0.0, 0.0, 0.0, 0.0, 0.9, 1.1});
  net.buses.push_back({2, BusKind::PQ, pload, qload, 0.0, 0.0, 0.9, 1.1});
  Branch br;
  br.from_bus = 1;
  br.to_bus = 2;
  br.r = 0.0;
  br.x = x;
  net.branches.push_back(br);
  net.generators.push_back({1, 0.0, 5.0, -5.0, 5.0, 0.0, 10.0, 0.0});
  return net;
}

Network load_case9() {
  return load_matpower_file(std::string(GRIDOPT_DATA_DIR) + "/case9.m");
}

// Total line and shunt losses recomputed from the reported flows.
double loss_balance_gap(const PowerFlowResult& pf, const Network& net) {
  double line_loss = 0.0;
  for (std::size_t l = 0; l < net.branches.size(); ++l)
    if (!pf.open[l]) line_loss += (pf.s_from[l] + pf.s_to[l]).real();
  double shunt = 0.0;
  for (std::size_t i = 0; i < net.buses.size(); ++i)
    shunt += net.buses[i].gs * pf.v_mag[i] * pf.v_mag[i];
  // Net injections from the flow bookkeeping must absorb exactly the losses.
  BusIndex bix(net);
  std::vector<double> inj(net.buses.size(), 0.0);
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    if (pf.open[l]) continue;
    inj[bix.at(net.branches[l].from_bus)] += pf.s_from[l].real();
    inj[bix.at(net.branches[l].to_bus)] += pf.s_to[l].real();
  }
  double total_inj = 0.0;
  for (std::size_t i = 0; i < net.buses.size(); ++i) total_inj += inj[i];
  return std::abs(total_inj - line_loss);
}

}  // namespace

TEST_CASE("island check partitions the switched graph", "[acfeas]") {
  Network net = load_case9();
  REQUIRE(island_check(net, {}).size() == 1);

  // Bus 5 hangs off branches 3 and 4 in case9; cutting both isolates it.
  BusIndex bix(net);
  std::vector<int> cut;
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    const Branch& br = net.branches[l];
    if (br.from_bus == 5 || br.to_bus == 5) cut.push_back(static_cast<int>(l));
  }
  REQUIRE(cut.size() == 2);
  auto groups = island_check(net, cut);
  REQUIRE(groups.size() == 2);
  bool found = false;
  for (const auto& g : groups)
    if (g.size() == 1 && g[0] == 5) found = true;
  CHECK(found);

  CHECK_THROWS_AS(island_check(net, {99}), std::out_of_range);
}

TEST_CASE("flat network converges immediately to the flat profile", "[acfeas]") {
  Network net = two_bus_pf(0.1, 0.0, 0.0);
  GenSetpoints sp;
  sp.pg = {0.0};
  auto pf = newton_power_flow(net, sp);
  REQUIRE(pf.converged);
  CHECK(pf.iterations <= 1);
  CHECK(pf.v_mag[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(pf.v_mag[1] == Catch::Approx(1.0).margin(1e-12));
  CHECK(pf.v_ang[1] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("two-bus angle matches the scalar bisection oracle", "[acfeas]") {
  const double x = 0.1, p = 0.5;
  double th_star = two_bus_angle_oracle(x, p);

  Network net = two_bus_pf(x, p, 0.0);
  GenSetpoints sp;
  sp.pg = {0.0};  // slack absorbs the load
  auto pf = newton_power_flow(net, sp);
  REQUIRE(pf.converged);
  REQUIRE(pf.mismatch_inf_norm <= 1e-8);

  CHECK(pf.v_ang[1] == Catch::Approx(th_star).margin(1e-7));
  CHECK(pf.v_mag[1] == Catch::Approx(std::cos(th_star)).margin(1e-7));
  // The defining identity, evaluated on the solved state.
  double p_line = (1.0 / x) * pf.v_mag[0] * pf.v_mag[1] * std::sin(pf.v_ang[0] - pf.v_ang[1]);
  CHECK(p_line == Catch::Approx(p).margin(1e-8));
  // Slack output seen from the line end equals the load (lossless line).
  CHECK(pf.s_from[0].real() == Catch::Approx(p).margin(1e-8));
}

TEST_CASE("case9 power flow from an OPF dispatch", "[acfeas]") {
  Network net = load_case9();
  auto h = build_dc_opf(net);
  auto sol = solve_continuous(h.program);
  REQUIRE(sol.status == SolveStatus::Optimal);
  auto d = extract_dispatch(h, sol);

  GenSetpoints sp;
  sp.pg = d.pg;
  auto pf = newton_power_flow(net, sp);
  REQUIRE(pf.converged);
  CHECK(pf.iterations <= 10);
  CHECK(pf.mismatch_inf_norm <= 1e-8);
  CHECK(loss_balance_gap(pf, net) <= 1e-8);

  SECTION("final Newton step shows the quadratic tail") {
    // Re-run with the tolerance just above the machine floor and compare the
    // mismatch against a one-iteration-shorter run.
    auto tight = newton_power_flow(net, sp, {}, 1e-12, 30);
    REQUIRE(tight.converged);
    auto shorter = newton_power_flow(net, sp, {}, 1e-12, tight.iterations - 1);
    REQUIRE_FALSE(shorter.converged);
    CHECK(tight.mismatch_inf_norm <= shorter.mismatch_inf_norm / 10.0);
  }
}

TEST_CASE("open-line semantics match the reduced network", "[acfeas]") {
  Network net = load_case9();
  GenSetpoints sp;
  sp.pg.assign(net.generators.size(), 0.3);

  auto pf = newton_power_flow(net, sp, {4});
  REQUIRE(pf.converged);
  CHECK(std::abs(pf.s_from[4]) == 0.0);
  CHECK(std::abs(pf.s_to[4]) == 0.0);

  // Physically removing the branch gives the same operating point.
  Network cut = net;
  cut.branches[4].status = 0;
  auto pf2 = newton_power_flow(cut, sp);
  REQUIRE(pf2.converged);
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    CHECK(pf.v_mag[i] == Catch::Approx(pf2.v_mag[i]).margin(1e-10));
    CHECK(pf.v_ang[i] == Catch::Approx(pf2.v_ang[i]).margin(1e-10));
  }
  CHECK(loss_balance_gap(pf, net) <= 1e-8);
}

TEST_CASE("islanding switch is rejected by name", "[acfeas]") {
  Network net = load_case9();
  std::vector<int> cut;
  for (std::size_t l = 0; l < net.branches.size(); ++l) {
    const Branch& br = net.branches[l];
    if (br.from_bus == 5 || br.to_bus == 5) cut.push_back(static_cast<int>(l));
  }
  GenSetpoints sp;
  sp.pg.assign(net.generators.size(), 0.3);
  try {
    newton_power_flow(net, sp, cut);
    FAIL("expected islanding error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("islanded") != std::string::npos);
    CHECK(std::string(e.what()).find('5') != std::string::npos);
  }
}

TEST_CASE("generator reactive limits drop a PV bus to PQ", "[acfeas]") {
  Network net;
  net.buses.push_back({1, BusKind::Slack, 0.0, 0.0, 0.0, 0.0, 0.9, 1.1});
  net.buses.push_back({2, BusKind::PV, 0.3, 0.6, 0.0, 0.0, 0.9, 1.1});
  Branch br;
  br.from_bus = 1;
  br.to_bus = 2;
  br.r = 0.01;
  br.x = 0.1;
  net.branches.push_back(br);
  net.generators.push_back({1, 0.0, 5.0, -5.0, 5.0, 0.0, 10.0, 0.0});
  net.generators.push_back({2, 0.0, 1.0, -0.1, 0.1, 0.0, 50.0, 0.0});

  GenSetpoints sp;
  sp.pg = {0.0, 0.3};
  sp.v_mag = {1.0, 1.05};
  auto pf = newton_power_flow(net, sp);
  REQUIRE(pf.converged);
  // The 0.6 pu reactive load exceeds q_max = 0.1, so the bus cannot hold
  // its 1.05 target: gen Q pins at the cap and the voltage sags.
  CHECK(pf.v_mag[1] < 1.05 - 1e-4);
  // Gen output reconstructed from the line flow: injection plus demand.
  double q_gen = pf.s_to[0].imag() + 0.6;
  CHECK(q_gen == Catch::Approx(0.1).margin(1e-6));

  // With the slack raised to the same level the line only carries a little
  // reactive loss, the limit stops binding, and the target holds.
  net.buses[1].q_demand = 0.0;
  GenSetpoints sp2 = sp;
  sp2.v_mag = {1.05, 1.05};
  auto pf2 = newton_power_flow(net, sp2);
  REQUIRE(pf2.converged);
  CHECK(pf2.v_mag[1] == Catch::Approx(1.05).margin(1e-8));
}

TEST_CASE("feasibility report flags limit violations", "[acfeas]") {
  Network net = load_case9();
  auto h = build_socp_acopf(net, false);
  auto sol = solve_continuous(h.program);
  REQUIRE(sol.status == SolveStatus::Optimal);
  auto d = extract_dispatch(h, sol);

  GenSetpoints sp;
  sp.pg = d.pg;
  sp.v_mag.resize(net.buses.size());
  for (std::size_t i = 0; i < net.buses.size(); ++i) sp.v_mag[i] = std::sqrt(d.e[i]);
  auto pf = newton_power_flow(net, sp);
  REQUIRE(pf.converged);

  SECTION("recovered nominal dispatch is clean") {
    // Raw sqrt(e) targets can push junction buses a few mpu past the cap
    // (the relaxation is not exact on zero-resistance branches); the
    // recovery trims generator targets until the profile fits.
    auto rec = recover_operating_point(net, d.pg, d.e);
    REQUIRE(rec.pf.converged);
    CHECK(rec.report.ok());
    // The trimmed point is a genuine AC solution of the same dispatch:
    // generation cost moves only with the slack generator's loss pickup.
    BusIndex bix(net);
    double slack_p = 0.0;
    for (std::size_t l = 0; l < net.branches.size(); ++l) {
      if (net.branches[l].from_bus == net.generators[0].bus) slack_p += rec.pf.s_from[l].real();
      if (net.branches[l].to_bus == net.generators[0].bus) slack_p += rec.pf.s_to[l].real();
    }
    CHECK(std::abs(slack_p - d.pg[0]) < 0.05);
  }
  SECTION("an artificially tiny rating trips the thermal check") {
    Network tight = net;
    tight.branches[2].rate = 0.01;
    auto rep = feasibility_report(pf, tight);
    REQUIRE(rep.thermal.size() >= 1);
    bool hit = false;
    for (const auto& v : rep.thermal)
      if (v.index == 2) {
        hit = true;
        CHECK(v.magnitude > 0.0);
      }
    CHECK(hit);
  }
  SECTION("a raised voltage floor trips the voltage check") {
    Network tight = net;
    for (Bus& b : tight.buses) b.v_min = 1.05;
    auto rep = feasibility_report(pf, tight);
    CHECK(rep.voltage.size() >= 1);
  }
  SECTION("a collapsed angle box trips the angle check") {
    Network tight = net;
    for (Branch& b : tight.branches) {
      b.angle_min = -1e-5;
      b.angle_max = 1e-5;
    }
    auto rep = feasibility_report(pf, tight);
    CHECK(rep.angle.size() >= 1);
  }
  SECTION("non-converged input is rejected") {
    PowerFlowResult bad;
    CHECK_THROWS_AS(feasibility_report(bad, net), std::invalid_argument);
  }
}

TEST_CASE("heavy load under a raised floor reports undervoltage", "[acfeas]") {
  Network net = two_bus_pf(0.1, 2.0, 0.5);
  net.buses[1].v_min = 0.95;
  GenSetpoints sp;
  sp.pg = {0.0};
  auto pf = newton_power_flow(net, sp);
  REQUIRE(pf.converged);
  REQUIRE(pf.v_mag[1] < 0.95);
  auto rep = feasibility_report(pf, net);
  REQUIRE(rep.voltage.size() == 1);
  CHECK(rep.voltage[0].index == 1);
  CHECK(rep.voltage[0].magnitude == Catch::Approx(0.95 - pf.v_mag[1]).margin(1e-9));
}

TEST_CASE("setpoint size mismatches are rejected", "[acfeas]") {
  Network net = two_bus_pf(0.1, 0.5, 0.0);
  GenSetpoints sp;
  sp.pg = {0.0, 1.0};  // one generator only
  CHECK_THROWS_AS(newton_power_flow(net, sp), std::invalid_argument);
  sp.pg = {0.0};
  sp.v_mag = {1.0};  // two buses
  CHECK_THROWS_AS(newton_power_flow(net, sp), std::invalid_argument);
}
