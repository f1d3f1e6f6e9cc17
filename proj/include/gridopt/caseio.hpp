// MATPOWER case parsing, a native JSON case format, and the switchable sidecar.
#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridopt/netmodel.hpp"

namespace gridopt {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Matrix = std::vector<std::vector<double>>;

// Raw MATPOWER tables before per-unitization.
struct RawCase {
  std::string name;
  double base_mva = 0.0;
  Matrix bus_table;
  Matrix gen_table;
  Matrix branch_table;
  Matrix gencost_table;
};

// MATPOWER column positions (0-based).
namespace mpc {
// bus: BUS_I TYPE PD QD GS BS AREA VM VA BASE_KV ZONE VMAX VMIN
enum { BUS_I = 0, BUS_TYPE = 1, PD = 2, QD = 3, GS = 4, BS = 5, VM = 7, VA = 8, BASE_KV = 9, VMAX = 11, VMIN = 12 };
// gen: GEN_BUS PG QG QMAX QMIN VG MBASE GEN_STATUS PMAX PMIN
enum { GEN_BUS = 0, PG = 1, QG = 2, QMAX = 3, QMIN = 4, VG = 5, GEN_STATUS = 7, PMAX = 8, PMIN = 9 };
// branch: F_BUS T_BUS BR_R BR_X BR_B RATE_A RATE_B RATE_C TAP SHIFT BR_STATUS ANGMIN ANGMAX
enum { F_BUS = 0, T_BUS = 1, BR_R = 2, BR_X = 3, BR_B = 4, RATE_A = 5, TAP = 8, SHIFT = 9, BR_STATUS = 10, ANGMIN = 11, ANGMAX = 12 };
// gencost: MODEL STARTUP SHUTDOWN NCOST COST...
enum { MODEL = 0, NCOST = 3, COST = 4 };
}  // namespace mpc

namespace detail {

inline std::string strip_comments(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool in_comment = false;
  for (char ch : text) {
    if (ch == '%') in_comment = true;
    if (ch == '\n') in_comment = false;
    out.push_back(in_comment ? ' ' : ch);
  }
  return out;
}

inline Matrix parse_matrix(const std::string& text, const std::string& name) {
  std::string key = "mpc." + name;
  size_t pos = 0;
  while (true) {
    pos = text.find(key, pos);
    if (pos == std::string::npos) throw ParseError("matrix " + name + " not found");
    size_t after = pos + key.size();
    while (after < text.size() && std::isspace(static_cast<unsigned char>(text[after]))) ++after;
    if (after < text.size() && text[after] == '=') break;
    pos = after;
  }
  size_t open = text.find('[', pos);
  if (open == std::string::npos) throw ParseError("matrix " + name + ": '[' not found");
  size_t close = text.find(']', open);
  if (close == std::string::npos) throw ParseError("matrix " + name + ": ']' not found");

  Matrix rows;
  std::vector<double> row;
  std::string tok;
  auto flush_tok = [&]() {
    if (tok.empty()) return;
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == nullptr || *end != '\0')
      throw ParseError("matrix " + name + ": bad number '" + tok + "' in row " +
                       std::to_string(rows.size() + 1));
    row.push_back(v);
    tok.clear();
  };
  auto flush_row = [&]() {
    flush_tok();
    if (!row.empty()) {
      if (!rows.empty() && rows.front().size() != row.size())
        throw ParseError("matrix " + name + ": ragged row " + std::to_string(rows.size() + 1) +
                         " (" + std::to_string(row.size()) + " vs " +
                         std::to_string(rows.front().size()) + " columns)");
      rows.push_back(std::move(row));
      row.clear();
    }
  };
  for (size_t i = open + 1; i < close; ++i) {
    char ch = text[i];
    if (ch == ';' || ch == '\n') {
      flush_row();
    } else if (std::isspace(static_cast<unsigned char>(ch)) || ch == ',') {
      flush_tok();
    } else {
      tok.push_back(ch);
    }
  }
  flush_row();
  return rows;
}

inline double parse_scalar(const std::string& text, const std::string& name) {
  std::string key = "mpc." + name;
  size_t pos = text.find(key);
  if (pos == std::string::npos) throw ParseError("scalar " + name + " not found");
  size_t eq = text.find('=', pos);
  if (eq == std::string::npos) throw ParseError("scalar " + name + ": '=' not found");
  size_t end = text.find(';', eq);
  std::string tok = text.substr(eq + 1, end == std::string::npos ? std::string::npos : end - eq - 1);
  try {
    return std::stod(tok);
  } catch (const std::exception&) {
    throw ParseError("scalar " + name + ": bad number '" + tok + "'");
  }
}

inline void check_columns(const Matrix& m, size_t min_cols, const std::string& name) {
  for (size_t i = 0; i < m.size(); ++i)
    if (m[i].size() < min_cols)
      throw ParseError("matrix " + name + ": row " + std::to_string(i + 1) + " has " +
                       std::to_string(m[i].size()) + " columns, need >= " +
                       std::to_string(min_cols));
}

}  // namespace detail

inline RawCase parse_matpower(const std::string& text) {
  std::string clean = detail::strip_comments(text);
  RawCase raw;
  size_t fn = clean.find("function");
  if (fn != std::string::npos) {
    size_t eq = clean.find('=', fn);
    if (eq != std::string::npos) {
      std::istringstream is(clean.substr(eq + 1));
      is >> raw.name;
    }
  }
  raw.base_mva = detail::parse_scalar(clean, "baseMVA");
  raw.bus_table = detail::parse_matrix(clean, "bus");
  raw.gen_table = detail::parse_matrix(clean, "gen");
  raw.branch_table = detail::parse_matrix(clean, "branch");
  raw.gencost_table = detail::parse_matrix(clean, "gencost");
  detail::check_columns(raw.bus_table, 13, "bus");
  detail::check_columns(raw.gen_table, 10, "gen");
  detail::check_columns(raw.branch_table, 13, "branch");
  detail::check_columns(raw.gencost_table, 4, "gencost");
  if (raw.base_mva <= 0) throw ParseError("baseMVA must be positive");
  return raw;
}

// Angle-difference default when the case file says 0 or +-360 (unconstrained
// in MATPOWER terms): stability practice keeps |theta_ij| small.
inline constexpr double kDefaultAngleBound = 1.047;  // rad, ~60 deg

inline Network to_network(const RawCase& raw) {
  Network net;
  net.base_mva = raw.base_mva;
  net.name = raw.name;

  for (size_t i = 0; i < raw.bus_table.size(); ++i) {
    const auto& row = raw.bus_table[i];
    Bus b;
    b.id = static_cast<int>(row[mpc::BUS_I]);
    int type = static_cast<int>(row[mpc::BUS_TYPE]);
    b.kind = type == 3 ? BusKind::Slack : (type == 2 ? BusKind::PV : BusKind::PQ);
    b.p_demand = row[mpc::PD] / raw.base_mva;
    b.q_demand = row[mpc::QD] / raw.base_mva;
    b.gs = row[mpc::GS] / raw.base_mva;
    b.bs = row[mpc::BS] / raw.base_mva;
    b.base_kv = row[mpc::BASE_KV];
    b.v_max = row[mpc::VMAX];
    b.v_min = row[mpc::VMIN];
    net.buses.push_back(b);
  }

  for (size_t l = 0; l < raw.branch_table.size(); ++l) {
    const auto& row = raw.branch_table[l];
    Branch br;
    br.from_bus = static_cast<int>(row[mpc::F_BUS]);
    br.to_bus = static_cast<int>(row[mpc::T_BUS]);
    br.r = row[mpc::BR_R];
    br.x = row[mpc::BR_X];
    br.b_sh = row[mpc::BR_B];
    br.rate = row[mpc::RATE_A] / raw.base_mva;
    br.tap = row[mpc::TAP] == 0.0 ? 1.0 : row[mpc::TAP];
    br.shift = row[mpc::SHIFT] * M_PI / 180.0;
    br.status = row[mpc::BR_STATUS] != 0.0;
    double lo = row[mpc::ANGMIN], hi = row[mpc::ANGMAX];
    bool unconstrained = (lo == 0.0 && hi == 0.0) || lo <= -360.0 || hi >= 360.0;
    br.angle_min = unconstrained ? -kDefaultAngleBound : lo * M_PI / 180.0;
    br.angle_max = unconstrained ? kDefaultAngleBound : hi * M_PI / 180.0;
    // Switching devices sit on plain lines; transformers stay non-switchable.
    br.switchable = br.status && !br.is_transformer();
    net.branches.push_back(br);
  }

  if (raw.gencost_table.size() != raw.gen_table.size())
    throw ParseError("gencost has " + std::to_string(raw.gencost_table.size()) +
                     " rows for " + std::to_string(raw.gen_table.size()) + " generators");

  for (size_t g = 0; g < raw.gen_table.size(); ++g) {
    const auto& row = raw.gen_table[g];
    if (row[mpc::GEN_STATUS] == 0.0) continue;  // out-of-service units are dropped
    Generator gen;
    gen.bus = static_cast<int>(row[mpc::GEN_BUS]);
    gen.p_max = row[mpc::PMAX] / raw.base_mva;
    gen.p_min = row[mpc::PMIN] / raw.base_mva;
    gen.q_max = row[mpc::QMAX] / raw.base_mva;
    gen.q_min = row[mpc::QMIN] / raw.base_mva;

    const auto& cost = raw.gencost_table[g];
    int model = static_cast<int>(cost[mpc::MODEL]);
    if (model != 2)
      throw ParseError("gencost row " + std::to_string(g + 1) +
                       ": only polynomial cost (MODEL=2) is supported");
    int ncost = static_cast<int>(cost[mpc::NCOST]);
    if (ncost > 3)
      throw ParseError("gencost row " + std::to_string(g + 1) +
                       ": NCOST > 3 (beyond quadratic) is unsupported");
    if (cost.size() < static_cast<size_t>(mpc::COST + ncost))
      throw ParseError("gencost row " + std::to_string(g + 1) + ": too few coefficients");
    // Coefficients are highest order first.
    if (ncost == 3) {
      gen.c2 = cost[mpc::COST];
      gen.c1 = cost[mpc::COST + 1];
      gen.c0 = cost[mpc::COST + 2];
    } else if (ncost == 2) {
      gen.c1 = cost[mpc::COST];
      gen.c0 = cost[mpc::COST + 1];
    } else if (ncost == 1) {
      gen.c0 = cost[mpc::COST];
    }
    net.generators.push_back(gen);
  }
  return net;
}

inline Network load_matpower_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return to_network(parse_matpower(ss.str()));
}

// --- native JSON case format (schema: data/case.schema.json) ---

namespace detail {

inline double num_at(const nlohmann::json& j, const char* key, const std::string& path) {
  if (!j.contains(key)) throw ParseError("missing field " + path + "." + key);
  if (!j[key].is_number()) throw ParseError("field " + path + "." + key + " must be a number");
  return j[key].get<double>();
}

inline void check_known_fields(const nlohmann::json& j, std::initializer_list<const char*> known,
                               const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ParseError("unknown field " + path + "." + it.key());
  }
}

}  // namespace detail

inline nlohmann::json to_json(const Network& net) {
  nlohmann::json j;
  j["format"] = "gridopt-case";
  j["version"] = 1;
  j["name"] = net.name;
  j["base_mva"] = net.base_mva;
  j["buses"] = nlohmann::json::array();
  for (const Bus& b : net.buses) {
    j["buses"].push_back({{"id", b.id},
                          {"kind", b.kind == BusKind::Slack ? "slack" : (b.kind == BusKind::PV ? "pv" : "pq")},
                          {"p_demand", b.p_demand},
                          {"q_demand", b.q_demand},
                          {"gs", b.gs},
                          {"bs", b.bs},
                          {"v_min", b.v_min},
                          {"v_max", b.v_max},
                          {"base_kv", b.base_kv}});
  }
  j["branches"] = nlohmann::json::array();
  for (const Branch& br : net.branches) {
    j["branches"].push_back({{"from_bus", br.from_bus},
                             {"to_bus", br.to_bus},
                             {"r", br.r},
                             {"x", br.x},
                             {"b_sh", br.b_sh},
                             {"tap", br.tap},
                             {"shift", br.shift},
                             {"rate", br.rate},
                             {"status", br.status},
                             {"switchable", br.switchable},
                             {"angle_min", br.angle_min},
                             {"angle_max", br.angle_max}});
  }
  j["generators"] = nlohmann::json::array();
  for (const Generator& g : net.generators) {
    j["generators"].push_back({{"bus", g.bus},
                               {"p_min", g.p_min},
                               {"p_max", g.p_max},
                               {"q_min", g.q_min},
                               {"q_max", g.q_max},
                               {"c2", g.c2},
                               {"c1", g.c1},
                               {"c0", g.c0}});
  }
  return j;
}

inline std::string serialize_json(const Network& net) { return to_json(net).dump(2) + "\n"; }

inline Network parse_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("case must be a JSON object at $");
  detail::check_known_fields(j, {"format", "version", "name", "base_mva", "buses", "branches", "generators"}, "$");
  if (j.value("format", "") != "gridopt-case") throw ParseError("field $.format must be \"gridopt-case\"");

  Network net;
  net.name = j.value("name", "");
  net.base_mva = detail::num_at(j, "base_mva", "$");

  if (!j.contains("buses") || !j["buses"].is_array()) throw ParseError("missing array $.buses");
  int bi = 0;
  for (const auto& jb : j["buses"]) {
    std::string path = "$.buses[" + std::to_string(bi++) + "]";
    detail::check_known_fields(jb, {"id", "kind", "p_demand", "q_demand", "gs", "bs", "v_min", "v_max", "base_kv"}, path);
    Bus b;
    b.id = static_cast<int>(detail::num_at(jb, "id", path));
    std::string kind = jb.value("kind", "pq");
    if (kind == "slack") b.kind = BusKind::Slack;
    else if (kind == "pv") b.kind = BusKind::PV;
    else if (kind == "pq") b.kind = BusKind::PQ;
    else throw ParseError("field " + path + ".kind must be one of pq|pv|slack");
    b.p_demand = detail::num_at(jb, "p_demand", path);
    b.q_demand = detail::num_at(jb, "q_demand", path);
    b.gs = detail::num_at(jb, "gs", path);
    b.bs = detail::num_at(jb, "bs", path);
    b.v_min = detail::num_at(jb, "v_min", path);
    b.v_max = detail::num_at(jb, "v_max", path);
    b.base_kv = detail::num_at(jb, "base_kv", path);
    net.buses.push_back(b);
  }

  if (!j.contains("branches") || !j["branches"].is_array()) throw ParseError("missing array $.branches");
  int li = 0;
  for (const auto& jb : j["branches"]) {
    std::string path = "$.branches[" + std::to_string(li++) + "]";
    detail::check_known_fields(jb, {"from_bus", "to_bus", "r", "x", "b_sh", "tap", "shift", "rate", "status", "switchable", "angle_min", "angle_max"}, path);
    Branch br;
    br.from_bus = static_cast<int>(detail::num_at(jb, "from_bus", path));
    br.to_bus = static_cast<int>(detail::num_at(jb, "to_bus", path));
    br.r = detail::num_at(jb, "r", path);
    br.x = detail::num_at(jb, "x", path);
    br.b_sh = detail::num_at(jb, "b_sh", path);
    br.tap = detail::num_at(jb, "tap", path);
    br.shift = detail::num_at(jb, "shift", path);
    br.rate = detail::num_at(jb, "rate", path);
    if (!jb.contains("status") || !jb["status"].is_boolean())
      throw ParseError("field " + path + ".status must be a boolean");
    br.status = jb["status"].get<bool>();
    if (!jb.contains("switchable") || !jb["switchable"].is_boolean())
      throw ParseError("field " + path + ".switchable must be a boolean");
    br.switchable = jb["switchable"].get<bool>();
    br.angle_min = detail::num_at(jb, "angle_min", path);
    br.angle_max = detail::num_at(jb, "angle_max", path);
    net.branches.push_back(br);
  }

  if (!j.contains("generators") || !j["generators"].is_array()) throw ParseError("missing array $.generators");
  int gi = 0;
  for (const auto& jg : j["generators"]) {
    std::string path = "$.generators[" + std::to_string(gi++) + "]";
    detail::check_known_fields(jg, {"bus", "p_min", "p_max", "q_min", "q_max", "c2", "c1", "c0"}, path);
    Generator g;
    g.bus = static_cast<int>(detail::num_at(jg, "bus", path));
    g.p_min = detail::num_at(jg, "p_min", path);
    g.p_max = detail::num_at(jg, "p_max", path);
    g.q_min = detail::num_at(jg, "q_min", path);
    g.q_max = detail::num_at(jg, "q_max", path);
    g.c2 = detail::num_at(jg, "c2", path);
    g.c1 = detail::num_at(jg, "c1", path);
    g.c0 = detail::num_at(jg, "c0", path);
    net.generators.push_back(g);
  }
  return net;
}

// Sidecar: one 0-based branch index per line; '#' starts a comment.
inline Network load_switchable(const Network& net, const std::string& text) {
  Network out = net;
  for (Branch& br : out.branches) br.switchable = false;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    long idx;
    while (ls >> idx) {
      if (idx < 0 || idx >= net.n_branches())
        throw ParseError("switchable list line " + std::to_string(lineno) + ": branch index " +
                         std::to_string(idx) + " out of range [0, " +
                         std::to_string(net.n_branches()) + ")");
      out.branches[static_cast<size_t>(idx)].switchable = true;
    }
    if (!ls.eof()) {
      std::string rest;
      ls.clear();
      ls >> rest;
      if (!rest.empty())
        throw ParseError("switchable list line " + std::to_string(lineno) + ": bad token '" + rest + "'");
    }
  }
  return out;
}

}  // namespace gridopt
