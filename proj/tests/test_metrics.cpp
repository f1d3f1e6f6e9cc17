#include <catch2/catch_amalgamated.hpp>

#include <random>

#include <gridopt/caseio.hpp>
#include <gridopt/ipm.hpp>
#include <gridopt/metrics.hpp>
#include <gridopt/mibb.hpp>

using namespace gridopt;

namespace {

Network one_bus_linear(double load, double c1) {
  Network net;
  net.buses.push_back({1, BusKind::Slack, load, 0.0, 0.0, 0.0, 0.9, 1.1});
  net.generators.push_back({1, 0.0, 2.0, -1.0, 1.0, 0.0, c1, 0.0});
  return net;
}

// Two buses joined by one line: cheap gen at 1, expensive at 2, load at 2.
Network two_bus(double rate) {
  Network net;
  net.buses.push_back({1, BusKind::Slack, 0.0, 0.0, 0.0, 0.0, 0.9, 1.1});
  net.buses.push_back({2, BusKind::PQ, 1.0, 0.0, 0.0, 0.0, 0.9, 1.1});
  Branch br;
  br.from_bus = 1;
  br.to_bus = 2;
  br.r = 0.01;
  br.x = 0.1;
  br.rate = rate;
  net.branches.push_back(br);
  net.generators.push_back({1, 0.0, 2.0, -1.0, 1.0, 0.0, 10.0, 0.0});
  net.generators.push_back({2, 0.0, 2.0, -1.0, 1.0, 0.0, 50.0, 0.0});
  return net;
}

Network load_case9() {
  return load_matpower_file(std::string(GRIDOPT_DATA_DIR) + "/case9.m");
}

struct Solved {
  ModelHandle h;
  ConicSolution sol;
  DispatchSolution d;
};

Solved solve_dc(const Network& net) {
  Solved s{build_dc_opf(net), {}, {}};
  s.sol = solve_continuous(s.h.program);
  REQUIRE(s.sol.status == SolveStatus::Optimal);
  s.d = extract_dispatch(s.h, s.sol);
  return s;
}

}  // namespace

TEST_CASE("single-bus LMP equals the marginal cost", "[metrics]") {
  auto s = solve_dc(one_bus_linear(0.5, 10.0));
  auto prices = lmp(s.h, s.sol);
  REQUIRE(prices.size() == 1);
  CHECK(prices[0] == Catch::Approx(10.0).margin(1e-6));
  CHECK(total_cost(s.d, s.h.net) == Catch::Approx(s.sol.objective).epsilon(1e-9));
}

TEST_CASE("uncongested DC network has uniform prices and zero rent", "[metrics]") {
  auto s = solve_dc(two_bus(0.0));  // unlimited line
  auto prices = lmp(s.h, s.sol);
  CHECK(prices[0] == Catch::Approx(prices[1]).margin(1e-6));
  CHECK(prices[0] == Catch::Approx(10.0).margin(1e-5));
  auto line_prices = fmp(s.h, s.sol);
  CHECK(std::abs(line_prices[0]) <= 1e-6);
  CHECK(std::abs(congestion_rent(prices, s.d, s.h.net)) <= 1e-6);
}

TEST_CASE("congested DC line prices at the LMP spread", "[metrics]") {
  auto s = solve_dc(two_bus(0.4));
  auto prices = lmp(s.h, s.sol);
  // Hand KKT: bus 1 prices at the cheap gen, bus 2 at the expensive one.
  CHECK(prices[0] == Catch::Approx(10.0).margin(1e-5));
  CHECK(prices[1] == Catch::Approx(50.0).margin(1e-5));
  auto line_prices = fmp(s.h, s.sol);
  CHECK(line_prices[0] == Catch::Approx(prices[1] - prices[0]).margin(1e-4));
  // CR = spread * flow: (50-10) $/MWh * 40 MW = 1600 $/h.
  double cr = congestion_rent(prices, s.d, s.h.net);
  CHECK(cr == Catch::Approx(1600.0).margin(0.1));

  auto rep = study_report(s.h, s.sol, s.d);
  CHECK(rep.congested_lines == std::vector<int>{0});
  CHECK(rep.total_cost == Catch::Approx(s.sol.objective).epsilon(1e-9));
  CHECK(rep.avg_lmp == Catch::Approx(30.0).margin(1e-4));
  CHECK(rep.lmp_std == Catch::Approx(20.0).margin(1e-4));
}

TEST_CASE("reverse-direction congestion yields a negative line price", "[metrics]") {
  // Load at bus 1, cheap gen at bus 2: the line runs 2 -> 1, against its
  // orientation, so the binding limit is the lower box bound.
  Network net = two_bus(0.4);
  net.buses[0].p_demand = 1.0;
  net.buses[1].p_demand = 0.0;
  net.generators[0].c1 = 50.0;
  net.generators[1].c1 = 10.0;
  auto s = solve_dc(net);
  auto prices = lmp(s.h, s.sol);
  CHECK(prices[0] == Catch::Approx(50.0).margin(1e-5));
  CHECK(prices[1] == Catch::Approx(10.0).margin(1e-5));
  auto line_prices = fmp(s.h, s.sol);
  CHECK(line_prices[0] == Catch::Approx(-40.0).margin(1e-4));
  // Rent stays positive: congestion always collects from the network.
  CHECK(congestion_rent(prices, s.d, s.h.net) == Catch::Approx(1600.0).margin(0.1));
}

TEST_CASE("zero dispatch costs the constant offsets", "[metrics]") {
  Network net = one_bus_linear(0.0, 10.0);
  net.generators[0].c0 = 7.5;
  net.generators.push_back({1, 0.0, 1.0, -1.0, 1.0, 0.0, 99.0, 2.5});
  DispatchSolution d;
  d.pg = {0.0, 0.0};
  CHECK(total_cost(d, net) == Catch::Approx(10.0));
}

TEST_CASE("quadratic cost arithmetic", "[metrics]") {
  // 100 MW on (c2, c1, c0) = (0.01, 5, 0): 0.01*100^2 + 5*100 = 600.
  Network net;
  net.buses.push_back({1, BusKind::Slack, 1.0, 0.0, 0.0, 0.0, 0.9, 1.1});
  net.generators.push_back({1, 0.0, 2.0, -1.0, 1.0, 0.01, 5.0, 0.0});
  DispatchSolution d;
  d.pg = {1.0};
  CHECK(total_cost(d, net) == Catch::Approx(600.0));
}

TEST_CASE("total cost tracks the solver objective on case9", "[metrics]") {
  Network net = load_case9();
  SECTION("dc") {
    auto s = solve_dc(net);
    CHECK(total_cost(s.d, net) == Catch::Approx(s.sol.objective).epsilon(1e-6));
  }
  SECTION("socp-mce") {
    auto h = build_socp_acopf(net, true);
    auto sol = solve_continuous(h.program);
    REQUIRE(sol.status == SolveStatus::Optimal);
    auto d = extract_dispatch(h, sol);
    CHECK(total_cost(d, net) == Catch::Approx(sol.objective).epsilon(1e-6));
    auto rep = study_report(h, sol, d);
    CHECK(rep.lmp_std >= 0.0);
    for (int l : rep.congested_lines) CHECK(std::abs(rep.fmp[l]) > kFmpTol);
  }
}

TEST_CASE("uniform-price lossless runs collect no rent", "[metrics]") {
  // Property over randomized radial networks: when no limit binds, DC LMPs
  // are uniform and the rent vanishes.
  std::mt19937 rng(20240817);
  std::uniform_real_distribution<double> load(0.1, 0.6), cost(5.0, 50.0);
  for (int trial = 0; trial < 8; ++trial) {
    int nb = 3 + static_cast<int>(rng() % 4);
    Network net;
    for (int i = 0; i < nb; ++i)
      net.buses.push_back({i + 1, i == 0 ? BusKind::Slack : BusKind::PQ, load(rng), 0.0, 0.0,
                           0.0, 0.9, 1.1});
    for (int i = 1; i < nb; ++i) {
      Branch br;
      br.from_bus = 1 + static_cast<int>(rng() % i);  // attach to an earlier bus
      br.to_bus = i + 1;
      br.r = 0.0;
      br.x = 0.05 + 0.1 * (i % 3);
      br.rate = 0.0;  // unlimited
      net.branches.push_back(br);
    }
    net.generators.push_back({1, 0.0, 10.0, -5.0, 5.0, 0.0, cost(rng), 0.0});
    net.generators.push_back({nb, 0.0, 10.0, -5.0, 5.0, 0.0, cost(rng), 0.0});
    auto s = solve_dc(net);
    auto prices = lmp(s.h, s.sol);
    auto line_prices = fmp(s.h, s.sol);
    double max_fmp = 0.0;
    for (double v : line_prices) max_fmp = std::max(max_fmp, std::abs(v));
    REQUIRE(max_fmp <= 1e-6);
    double spread = *std::max_element(prices.begin(), prices.end()) -
                    *std::min_element(prices.begin(), prices.end());
    CHECK(spread <= 1e-6);
    // Rent sums price * quantity terms in the thousands of dollars; hold it
    // to a tolerance proportional to that volume, not an absolute epsilon.
    double volume = 0.0;
    for (std::size_t b = 0; b < net.buses.size(); ++b)
      volume += std::abs(net.buses[b].p_demand) * net.base_mva * std::abs(prices[b]);
    CHECK(std::abs(congestion_rent(prices, s.d, s.h.net)) <= 1e-8 * volume + 1e-9);
  }
}

TEST_CASE("switching study prices from the fixed-topology restriction", "[metrics]") {
  // Congested two-path triangle: opening the rated line uncongests the grid.
  Network net;
  net.buses.push_back({1, BusKind::Slack, 0.0, 0.0, 0.0, 0.0, 0.9, 1.1});
  net.buses.push_back({2, BusKind::PQ, 0.0, 0.0, 0.0, 0.0, 0.9, 1.1});
  net.buses.push_back({3, BusKind::PQ, 1.0, 0.0, 0.0, 0.0, 0.9, 1.1});
  auto line = [](int f, int t, double x, double rate) {
    Branch br;
    br.from_bus = f;
    br.to_bus = t;
    br.x = x;
    br.rate = rate;
    return br;
  };
  net.branches.push_back(line(1, 2, 0.1, 0.0));
  net.branches.push_back(line(2, 3, 0.1, 0.0));
  net.branches.push_back(line(1, 3, 0.2, 0.25));
  net.generators.push_back({1, 0.0, 2.0, -1.0, 1.0, 0.0, 10.0, 0.0});
  net.generators.push_back({3, 0.0, 2.0, -1.0, 1.0, 0.0, 100.0, 0.0});
  for (auto& br : net.branches) br.switchable = true;

  auto nominal = solve_dc(net);
  auto nom_rep = study_report(nominal.h, nominal.sol, nominal.d);
  REQUIRE(nom_rep.congested_lines.size() == 1);

  auto h = build_dc_ots(net, 1);
  MibbOptions mo;
  auto res = solve_misocp(h.program, mo);
  REQUIRE(res.status == MibbStatus::Optimal);
  auto duals = resolve_incumbent_duals(h.program, res.incumbent.primal);
  auto d = extract_dispatch(h, duals);
  auto ots_rep = study_report(h, duals, d);

  CHECK(ots_rep.open_lines == std::vector<int>{2});
  CHECK(ots_rep.total_cost < nom_rep.total_cost - 1.0);
  CHECK(ots_rep.congested_lines.empty());
  CHECK(ots_rep.avg_abs_fmp <= 1e-6);
  CHECK(ots_rep.lmp_std <= 1e-6);
  CHECK(ots_rep.congestion_rent < nom_rep.congestion_rent - 1.0);

  auto table = compare(nom_rep, ots_rep);
  std::string text = render(table);
  CHECK(text.find("total cost") != std::string::npos);
  CHECK(text.find('%') != std::string::npos);

  auto partial = render(compare(nom_rep));
  CHECK(partial.find('-') != std::string::npos);
  CHECK(partial.find('%') == std::string::npos);
}

TEST_CASE("identical studies compare at zero deltas", "[metrics]") {
  auto s = solve_dc(two_bus(0.4));
  auto rep = study_report(s.h, s.sol, s.d);
  std::string text = render(compare(rep, rep));
  CHECK(text.find("(0.00%)") != std::string::npos);
}

TEST_CASE("missing balance duals are rejected", "[metrics]") {
  auto s = solve_dc(two_bus(0.4));
  ConicSolution empty = s.sol;
  empty.duals.clear();
  CHECK_THROWS_AS(lmp(s.h, empty), std::invalid_argument);
}
