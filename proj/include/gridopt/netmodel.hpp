// Per-unit transmission network model and admittance-matrix assembly.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Sparse>

namespace gridopt {

using Complex = std::complex<double>;

enum class BusKind { PQ, PV, Slack };

struct Bus {
  int id = 0;  // external (case-file) id; internal index is the position in Network::buses
  BusKind kind = BusKind::PQ;
  double p_demand = 0.0;  // pu
  double q_demand = 0.0;  // pu
  double gs = 0.0;        // shunt conductance, pu
  double bs = 0.0;        // shunt susceptance, pu
  double v_min = 0.9;     // pu
  double v_max = 1.1;     // pu
  double base_kv = 0.0;
};

struct Branch {
  int from_bus = 0;  // external bus id
  int to_bus = 0;    // external bus id
  double r = 0.0;
  double x = 0.0;
  double b_sh = 0.0;   // total line-charging susceptance, pu
  double tap = 1.0;    // off-nominal turns ratio, 1.0 = none
  double shift = 0.0;  // phase shift, rad
  double rate = 0.0;   // apparent-power limit, pu; 0 = unlimited
  bool status = true;
  bool switchable = true;
  double angle_min = -1.047;  // rad
  double angle_max = 1.047;   // rad

  bool is_transformer() const { return tap != 1.0 || shift != 0.0; }
};

struct Generator {
  int bus = 0;  // external bus id
  double p_min = 0.0, p_max = 0.0;  // pu
  double q_min = 0.0, q_max = 0.0;  // pu
  double c2 = 0.0;  // $/MW^2 h
  double c1 = 0.0;  // $/MWh
  double c0 = 0.0;  // $/h
};

struct Network {
  double base_mva = 100.0;
  std::string name;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;

  int n_buses() const { return static_cast<int>(buses.size()); }
  int n_branches() const { return static_cast<int>(branches.size()); }
  int n_generators() const { return static_cast<int>(generators.size()); }
};

// External bus id -> internal 0-based index. Case-file ids may be non-contiguous.
class BusIndex {
 public:
  explicit BusIndex(const Network& net) {
    map_.reserve(net.buses.size());
    for (int i = 0; i < net.n_buses(); ++i) map_.emplace(net.buses[i].id, i);
  }
  std::optional<int> find(int external_id) const {
    auto it = map_.find(external_id);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }
  int at(int external_id) const {
    auto idx = find(external_id);
    if (!idx) {
      throw std::invalid_argument("unknown bus id " + std::to_string(external_id));
    }
    return *idx;
  }

 private:
  std::unordered_map<int, int> map_;
};

struct Violation {
  std::string entity;  // e.g. "bus 5", "branch 3", "generator 1"
  std::string rule;

  std::string str() const { return entity + ": " + rule; }
};

inline std::vector<Violation> validate(const Network& net) {
  std::vector<Violation> out;
  auto add = [&](std::string entity, std::string rule) {
    out.push_back({std::move(entity), std::move(rule)});
  };

  BusIndex index(net);
  if (net.base_mva <= 0) add("network", "base_mva must be positive");

  int n_slack = 0;
  std::unordered_map<int, int> id_count;
  for (int i = 0; i < net.n_buses(); ++i) {
    const Bus& b = net.buses[i];
    std::string ent = "bus " + std::to_string(b.id);
    if (++id_count[b.id] == 2) add(ent, "duplicate bus id");
    if (b.v_min <= 0) add(ent, "v_min must be > 0");
    if (b.v_min > b.v_max) add(ent, "v_min exceeds v_max");
    if (b.kind == BusKind::Slack) ++n_slack;
  }
  if (n_slack != 1) {
    add("network", "expected exactly one slack bus, found " + std::to_string(n_slack));
  }

  for (int l = 0; l < net.n_branches(); ++l) {
    const Branch& br = net.branches[l];
    std::string ent = "branch " + std::to_string(l);
    if (!index.find(br.from_bus))
      add(ent, "from_bus " + std::to_string(br.from_bus) + " does not exist");
    if (!index.find(br.to_bus))
      add(ent, "to_bus " + std::to_string(br.to_bus) + " does not exist");
    if (br.x == 0.0) add(ent, "reactance x must be nonzero");
    if (br.rate < 0) add(ent, "rate must be >= 0");
    if (br.tap <= 0) add(ent, "tap must be positive");
    if (br.angle_min > 0 || br.angle_max < 0)
      add(ent, "angle bounds must satisfy angle_min <= 0 <= angle_max");
  }

  for (int g = 0; g < net.n_generators(); ++g) {
    const Generator& gen = net.generators[g];
    std::string ent = "generator " + std::to_string(g);
    if (!index.find(gen.bus)) add(ent, "bus " + std::to_string(gen.bus) + " does not exist");
    if (gen.p_min > gen.p_max) add(ent, "p_min exceeds p_max");
    if (gen.q_min > gen.q_max) add(ent, "q_min exceeds q_max");
    if (gen.c2 < 0) add(ent, "c2 must be >= 0 (convex cost)");
  }

  // Connectivity over in-service branches (advisory: report, don't reject).
  if (net.n_buses() > 1) {
    std::vector<std::vector<int>> adj(net.buses.size());
    for (const Branch& br : net.branches) {
      if (!br.status) continue;
      auto f = index.find(br.from_bus), t = index.find(br.to_bus);
      if (!f || !t) continue;
      adj[*f].push_back(*t);
      adj[*t].push_back(*f);
    }
    std::vector<char> seen(net.buses.size(), 0);
    std::vector<int> stack = {0};
    seen[0] = 1;
    int reached = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v : adj[u])
        if (!seen[v]) {
          seen[v] = 1;
          ++reached;
          stack.push_back(v);
        }
    }
    if (reached != net.n_buses())
      add("network", "graph over in-service branches is not connected");
  }
  return out;
}

inline void require_valid(const Network& net) {
  auto violations = validate(net);
  // Connectivity is a warning, not a hard failure.
  std::erase_if(violations, [](const Violation& v) {
    return v.rule.find("not connected") != std::string::npos;
  });
  if (!violations.empty()) {
    std::ostringstream os;
    os << "invalid network:";
    for (const auto& v : violations) os << "\n  " << v.str();
    throw std::invalid_argument(os.str());
  }
}

// Indices of in-service branches flagged switchable, ascending.
inline std::vector<int> switchable_set(const Network& net) {
  std::vector<int> out;
  for (int l = 0; l < net.n_branches(); ++l)
    if (net.branches[l].status && net.branches[l].switchable) out.push_back(l);
  return out;
}

// Two-port admittance of one branch under the standard Pi model with an
// off-nominal tap t and phase shift phi on the from side.
struct BranchAdmittance {
  Complex yff, yft, ytf, ytt;
};

inline BranchAdmittance branch_admittance(const Branch& br) {
  if (br.x == 0.0) throw std::invalid_argument("branch with x = 0");
  Complex ys = 1.0 / Complex(br.r, br.x);
  Complex ych(0.0, br.b_sh / 2.0);
  double t = br.tap;
  Complex shift = std::polar(1.0, br.shift);
  BranchAdmittance a;
  a.yff = (ys + ych) / (t * t);
  a.yft = -ys / (t * std::conj(shift));
  a.ytf = -ys / (t * shift);
  a.ytt = ys + ych;
  return a;
}

class AdmittanceMatrix {
 public:
  explicit AdmittanceMatrix(Eigen::SparseMatrix<Complex> y) : y_(std::move(y)) {}

  const Eigen::SparseMatrix<Complex>& matrix() const { return y_; }
  int size() const { return static_cast<int>(y_.rows()); }

  Complex at(int i, int j) const { return y_.coeff(i, j); }
  double g(int i, int j) const { return at(i, j).real(); }
  double b(int i, int j) const { return at(i, j).imag(); }
  double g_diag(int i) const { return g(i, i); }
  double b_diag(int i) const { return b(i, i); }

 private:
  Eigen::SparseMatrix<Complex> y_;
};

// Assembles the bus admittance matrix over in-service branches plus bus shunts.
// `extra_open` marks additional branch indices to leave out (used when probing
// switched topologies without copying the network).
inline AdmittanceMatrix build_admittance(const Network& net,
                                         const std::vector<int>& extra_open = {}) {
  require_valid(net);
  BusIndex index(net);
  std::vector<char> open(net.branches.size(), 0);
  for (int l : extra_open) {
    if (l < 0 || l >= net.n_branches())
      throw std::invalid_argument("open branch index out of range: " + std::to_string(l));
    open[l] = 1;
  }

  int n = net.n_buses();
  std::vector<Eigen::Triplet<Complex>> trips;
  trips.reserve(net.branches.size() * 4 + net.buses.size());
  for (int l = 0; l < net.n_branches(); ++l) {
    const Branch& br = net.branches[l];
    if (!br.status || open[l]) continue;
    BranchAdmittance a = branch_admittance(br);
    int f = index.at(br.from_bus), t = index.at(br.to_bus);
    trips.emplace_back(f, f, a.yff);
    trips.emplace_back(f, t, a.yft);
    trips.emplace_back(t, f, a.ytf);
    trips.emplace_back(t, t, a.ytt);
  }
  for (int i = 0; i < n; ++i) {
    const Bus& bus = net.buses[i];
    if (bus.gs != 0.0 || bus.bs != 0.0) trips.emplace_back(i, i, Complex(bus.gs, bus.bs));
  }
  Eigen::SparseMatrix<Complex> y(n, n);
  y.setFromTriplets(trips.begin(), trips.end());
  return AdmittanceMatrix(std::move(y));
}

}  // namespace gridopt
