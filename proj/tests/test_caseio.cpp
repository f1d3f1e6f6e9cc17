#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>
#include <sstream>

#include "gridopt/caseio.hpp"

using namespace gridopt;
using Catch::Approx;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string case9_text() { return read_file(std::string(GRIDOPT_DATA_DIR) + "/case9.m"); }

}  // namespace

TEST_CASE("bundled 9-bus case parses with expected shape", "[caseio]") {
  RawCase raw = parse_matpower(case9_text());
  CHECK(raw.name == "case9");
  CHECK(raw.base_mva == 100.0);
  CHECK(raw.bus_table.size() == 9);
  CHECK(raw.gen_table.size() == 3);
  CHECK(raw.branch_table.size() == 9);
  CHECK(raw.gencost_table.size() == 3);
}

TEST_CASE("missing matrix is reported by name", "[caseio]") {
  std::string text = "mpc.baseMVA = 100;\nmpc.bus = [1 3 0 0 0 0 1 1 0 345 1 1.1 0.9;];\n";
  try {
    parse_matpower(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("gen") != std::string::npos);
  }
  try {
    parse_matpower(text + "mpc.gen = [1 0 0 1 -1 1 100 1 1 0;];\nmpc.gencost = [2 0 0 2 1 0;];\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()) == "matrix branch not found");
  }
}

TEST_CASE("ragged rows are reported with the row number", "[caseio]") {
  std::string text = case9_text();
  // Clip one number off a bus row: row 3 loses its last column.
  auto pos = text.find("3\t2\t0\t0\t0\t0\t1\t1\t0\t345\t1\t1.1\t0.9");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, std::string("3\t2\t0\t0\t0\t0\t1\t1\t0\t345\t1\t1.1\t0.9").size(),
               "3\t2\t0\t0\t0\t0\t1\t1\t0\t345\t1\t1.1");
  try {
    parse_matpower(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find("ragged") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);
  }
}

TEST_CASE("scientific notation and comma separators parse", "[caseio]") {
  std::string text =
      "mpc.baseMVA = 1e2;\n"
      "mpc.bus = [1, 3, 0, 0, 0, 0, 1, 1, 0, 3.45e2, 1, 1.1, 9e-1; 2 1 90 30 0 0 1 1 0 345 1 1.1 0.9];\n"
      "mpc.gen = [1 0 0 300 -300 1 100 1 250 1e1;];\n"
      "mpc.branch = [1 2 0 5.76E-2 0 250 250 250 0 0 1 -360 360;];\n"
      "mpc.gencost = [2 0 0 3 1.1e-1 5 150;];\n";
  RawCase raw = parse_matpower(text);
  CHECK(raw.base_mva == 100.0);
  CHECK(raw.bus_table[0][mpc::BASE_KV] == Approx(345.0));
  CHECK(raw.branch_table[0][mpc::BR_X] == Approx(0.0576));
  Network net = to_network(raw);
  CHECK(net.generators[0].p_min == Approx(0.1));
}

TEST_CASE("per-unit conversion and angle defaults", "[caseio]") {
  Network net = to_network(parse_matpower(case9_text()));
  REQUIRE(net.n_buses() == 9);
  REQUIRE(net.n_branches() == 9);
  REQUIRE(net.n_generators() == 3);

  // PD=90 MW at base 100 MVA on bus 5.
  BusIndex idx(net);
  CHECK(net.buses[idx.at(5)].p_demand == Approx(0.9));
  CHECK(net.buses[idx.at(5)].q_demand == Approx(0.3));
  CHECK(net.buses[idx.at(1)].kind == BusKind::Slack);
  CHECK(net.buses[idx.at(2)].kind == BusKind::PV);
  CHECK(net.buses[idx.at(4)].kind == BusKind::PQ);

  // ANGMIN/ANGMAX of +-360 are treated as defaulted.
  for (const Branch& br : net.branches) {
    CHECK(br.angle_min == -1.047);
    CHECK(br.angle_max == 1.047);
  }

  // RATE_A=250 -> 2.5 pu; ratio 0 -> tap 1.
  CHECK(net.branches[0].rate == Approx(2.5));
  CHECK(net.branches[0].tap == 1.0);

  // gencost (2,_,_,3, 0.11, 5, 150) -> quadratic coefficients.
  CHECK(net.generators[0].c2 == Approx(0.11));
  CHECK(net.generators[0].c1 == Approx(5.0));
  CHECK(net.generators[0].c0 == Approx(150.0));

  // All plain in-service lines default to switchable.
  CHECK(switchable_set(net).size() == 9);

  CHECK(validate(net).empty());
}

TEST_CASE("explicit angle limits convert from degrees", "[caseio]") {
  std::string text =
      "mpc.baseMVA = 100;\n"
      "mpc.bus = [1 3 0 0 0 0 1 1 0 345 1 1.1 0.9; 2 1 90 30 0 0 1 1 0 345 1 1.1 0.9];\n"
      "mpc.gen = [1 0 0 300 -300 1 100 1 250 10;];\n"
      "mpc.branch = [1 2 0 0.06 0 250 0 0 0 0 1 -30 30;];\n"
      "mpc.gencost = [2 0 0 2 5 0;];\n";
  Network net = to_network(parse_matpower(text));
  CHECK(net.branches[0].angle_min == Approx(-30.0 * M_PI / 180.0));
  CHECK(net.branches[0].angle_max == Approx(30.0 * M_PI / 180.0));
}

TEST_CASE("linear cost rows map to c1 and c0", "[caseio]") {
  std::string text =
      "mpc.baseMVA = 100;\n"
      "mpc.bus = [1 3 0 0 0 0 1 1 0 345 1 1.1 0.9; 2 1 90 30 0 0 1 1 0 345 1 1.1 0.9];\n"
      "mpc.gen = [1 0 0 300 -300 1 100 1 250 10;];\n"
      "mpc.branch = [1 2 0 0.06 0 250 0 0 0 0 1 -360 360;];\n"
      "mpc.gencost = [2 0 0 2 14 80;];\n";
  Network net = to_network(parse_matpower(text));
  CHECK(net.generators[0].c2 == 0.0);
  CHECK(net.generators[0].c1 == Approx(14.0));
  CHECK(net.generators[0].c0 == Approx(80.0));
}

TEST_CASE("piecewise-linear and high-order costs are rejected", "[caseio]") {
  std::string base =
      "mpc.baseMVA = 100;\n"
      "mpc.bus = [1 3 0 0 0 0 1 1 0 345 1 1.1 0.9; 2 1 90 30 0 0 1 1 0 345 1 1.1 0.9];\n"
      "mpc.gen = [1 0 0 300 -300 1 100 1 250 10;];\n"
      "mpc.branch = [1 2 0 0.06 0 250 0 0 0 0 1 -360 360;];\n";
  CHECK_THROWS_AS(to_network(parse_matpower(base + "mpc.gencost = [1 0 0 2 0 0 100 2500;];\n")),
                  ParseError);
  CHECK_THROWS_AS(to_network(parse_matpower(base + "mpc.gencost = [2 0 0 4 0.1 0.2 0.3 0.4;];\n")),
                  ParseError);
}

TEST_CASE("out-of-service generators are dropped", "[caseio]") {
  std::string text =
      "mpc.baseMVA = 100;\n"
      "mpc.bus = [1 3 0 0 0 0 1 1 0 345 1 1.1 0.9; 2 1 90 30 0 0 1 1 0 345 1 1.1 0.9];\n"
      "mpc.gen = [1 0 0 300 -300 1 100 1 250 10; 2 0 0 300 -300 1 100 0 250 10;];\n"
      "mpc.branch = [1 2 0 0.06 0 250 0 0 0 0 1 -360 360;];\n"
      "mpc.gencost = [2 0 0 2 5 0; 2 0 0 2 9 0;];\n";
  Network net = to_network(parse_matpower(text));
  CHECK(net.n_generators() == 1);
}

TEST_CASE("transformers parse tap and shift and are not switchable", "[caseio]") {
  std::string text =
      "mpc.baseMVA = 100;\n"
      "mpc.bus = [1 3 0 0 0 0 1 1 0 345 1 1.1 0.9; 2 1 90 30 0 0 1 1 0 138 1 1.1 0.9];\n"
      "mpc.gen = [1 0 0 300 -300 1 100 1 250 10;];\n"
      "mpc.branch = [1 2 0 0.06 0 250 0 0 0.978 2.5 1 -360 360;];\n"
      "mpc.gencost = [2 0 0 2 5 0;];\n";
  Network net = to_network(parse_matpower(text));
  CHECK(net.branches[0].tap == Approx(0.978));
  CHECK(net.branches[0].shift == Approx(2.5 * M_PI / 180.0));
  CHECK(net.branches[0].is_transformer());
  CHECK(switchable_set(net).empty());
}

TEST_CASE("json round trip is the identity on all modeled fields", "[caseio]") {
  Network a = to_network(parse_matpower(case9_text()));
  a.branches[2].switchable = false;  // make the flag pattern non-uniform
  a.branches[4].status = false;
  Network b = parse_json(serialize_json(a));

  REQUIRE(b.n_buses() == a.n_buses());
  REQUIRE(b.n_branches() == a.n_branches());
  REQUIRE(b.n_generators() == a.n_generators());
  CHECK(b.base_mva == a.base_mva);
  CHECK(b.name == a.name);
  for (int i = 0; i < a.n_buses(); ++i) {
    CHECK(b.buses[i].id == a.buses[i].id);
    CHECK(b.buses[i].kind == a.buses[i].kind);
    CHECK(b.buses[i].p_demand == a.buses[i].p_demand);
    CHECK(b.buses[i].q_demand == a.buses[i].q_demand);
    CHECK(b.buses[i].gs == a.buses[i].gs);
    CHECK(b.buses[i].bs == a.buses[i].bs);
    CHECK(b.buses[i].v_min == a.buses[i].v_min);
    CHECK(b.buses[i].v_max == a.buses[i].v_max);
    CHECK(b.buses[i].base_kv == a.buses[i].base_kv);
  }
  for (int l = 0; l < a.n_branches(); ++l) {
    CHECK(b.branches[l].from_bus == a.branches[l].from_bus);
    CHECK(b.branches[l].to_bus == a.branches[l].to_bus);
    CHECK(b.branches[l].r == a.branches[l].r);
    CHECK(b.branches[l].x == a.branches[l].x);
    CHECK(b.branches[l].b_sh == a.branches[l].b_sh);
    CHECK(b.branches[l].tap == a.branches[l].tap);
    CHECK(b.branches[l].shift == a.branches[l].shift);
    CHECK(b.branches[l].rate == a.branches[l].rate);
    CHECK(b.branches[l].status == a.branches[l].status);
    CHECK(b.branches[l].switchable == a.branches[l].switchable);
    CHECK(b.branches[l].angle_min == a.branches[l].angle_min);
    CHECK(b.branches[l].angle_max == a.branches[l].angle_max);
  }
  for (int g = 0; g < a.n_generators(); ++g) {
    CHECK(b.generators[g].bus == a.generators[g].bus);
    CHECK(b.generators[g].p_min == a.generators[g].p_min);
    CHECK(b.generators[g].p_max == a.generators[g].p_max);
    CHECK(b.generators[g].q_min == a.generators[g].q_min);
    CHECK(b.generators[g].q_max == a.generators[g].q_max);
    CHECK(b.generators[g].c2 == a.generators[g].c2);
    CHECK(b.generators[g].c1 == a.generators[g].c1);
    CHECK(b.generators[g].c0 == a.generators[g].c0);
  }

  // Serializing twice is stable.
  CHECK(serialize_json(b) == serialize_json(a));
}

TEST_CASE("json schema violations name the path", "[caseio]") {
  Network net = to_network(parse_matpower(case9_text()));
  nlohmann::json j = to_json(net);

  SECTION("unknown field") {
    j["branches"][3]["color"] = "red";
    try {
      parse_json(j.dump());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      std::string msg = e.what();
      CHECK(msg.find("$.branches[3]") != std::string::npos);
      CHECK(msg.find("color") != std::string::npos);
    }
  }
  SECTION("wrong type") {
    j["buses"][0]["p_demand"] = "lots";
    try {
      parse_json(j.dump());
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("$.buses[0].p_demand") != std::string::npos);
    }
  }
  SECTION("missing field") {
    j["generators"][1].erase("c1");
    CHECK_THROWS_AS(parse_json(j.dump()), ParseError);
  }
  SECTION("wrong format tag") {
    j["format"] = "other";
    CHECK_THROWS_AS(parse_json(j.dump()), ParseError);
  }
  SECTION("not json at all") {
    CHECK_THROWS_AS(parse_json("mpc.baseMVA = 100;"), ParseError);
  }
}

TEST_CASE("switchable sidecar overrides defaults", "[caseio]") {
  Network net = to_network(parse_matpower(case9_text()));

  SECTION("empty file clears all flags") {
    Network out = load_switchable(net, "");
    CHECK(switchable_set(out).empty());
  }
  SECTION("listed indices set exactly those flags") {
    Network out = load_switchable(net, "0\n3\n");
    auto s = switchable_set(out);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == 0);
    CHECK(s[1] == 3);
  }
  SECTION("comments and blank lines are ignored") {
    Network out = load_switchable(net, "# corridor ties\n0 3  # same line\n\n7\n");
    auto s = switchable_set(out);
    REQUIRE(s.size() == 3);
    CHECK(s[2] == 7);
  }
  SECTION("out-of-range index is an error") {
    CHECK_THROWS_AS(load_switchable(net, "99\n"), ParseError);
  }
  SECTION("non-numeric token is an error") {
    CHECK_THROWS_AS(load_switchable(net, "zero\n"), ParseError);
  }
}

TEST_CASE("parser is total under random mutation", "[caseio][fuzz]") {
  std::string base = case9_text();
  std::mt19937 rng(20240817);
  std::uniform_int_distribution<size_t> pos_d(0, base.size() - 1);
  std::uniform_int_distribution<int> op_d(0, 3);
  std::uniform_int_distribution<int> ch_d(32, 126);

  for (int trial = 0; trial < 500; ++trial) {
    std::string text = base;
    int edits = 1 + static_cast<int>(rng() % 8);
    for (int e = 0; e < edits; ++e) {
      size_t p = pos_d(rng) % std::max<size_t>(text.size(), 1);
      switch (op_d(rng)) {
        case 0:  // flip a character
          if (!text.empty()) text[p] = static_cast<char>(ch_d(rng));
          break;
        case 1:  // delete a span
          if (!text.empty()) text.erase(p, rng() % 20);
          break;
        case 2:  // duplicate a span
          text.insert(p, text.substr(p, rng() % 20));
          break;
        case 3:  // truncate
          text.resize(p);
          break;
      }
    }
    try {
      Network net = to_network(parse_matpower(text));
      (void)validate(net);
    } catch (const ParseError&) {
      // diagnostics are the expected failure mode
    }
  }
  SUCCEED("no crash or non-ParseError escape across 500 mutants");
}
