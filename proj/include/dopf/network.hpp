#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <complex>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dopf/capacity.hpp"
#include "dopf/errors.hpp"
#include "dopf/phase.hpp"

namespace dopf {

enum class BusKind { Slack, PQLoad, PQGeneration, PVGeneration };

inline BusKind parse_bus_kind(const std::string& tok) {
  if (tok == "slack") return BusKind::Slack;
  if (tok == "pq_load") return BusKind::PQLoad;
  if (tok == "pq_generation") return BusKind::PQGeneration;
  if (tok == "pv_generation") return BusKind::PVGeneration;
  throw Error(Err::ParseError, "unknown bus kind '" + tok + "'");
}

inline const char* bus_kind_name(BusKind k) {
  switch (k) {
    case BusKind::Slack: return "slack";
    case BusKind::PQLoad: return "pq_load";
    case BusKind::PQGeneration: return "pq_generation";
    case BusKind::PVGeneration: return "pv_generation";
  }
  return "?";
}

// Per-bus split of (V, delta, p, q) into controllable inputs, disturbances
// and endogenous remainder. Composite buses carry split power symbols
// (p -> u-part "p" plus uncontrollable "p^c").
struct StatePartition {
  std::vector<std::string> u, d, x_end;
};

struct Bus {
  std::string id;
  std::set<BusKind> kinds;
  PhaseSet phases;
  std::optional<CapacityModel> capacity;
  std::array<double, 3> shunt_c{0, 0, 0};  // capacitor bank per phase, >= 0
  std::array<double, 3> beta_s{1, 1, 1};   // constant-power load share
  std::array<double, 3> beta_z{0, 0, 0};   // constant-impedance load share

  bool controllable() const { return capacity.has_value(); }
  bool is(BusKind k) const { return kinds.count(k) > 0; }
};

struct Branch {
  int from = -1, to = -1;  // bus indices; `from` is the upstream side once rooted
  PhaseSet phases;
  Eigen::Matrix3cd z = Eigen::Matrix3cd::Zero();  // entries only on present phases

  // single-phase accessors (phase a slot)
  double r1() const { return z(0, 0).real(); }
  double x1() const { return z(0, 0).imag(); }
};

struct Network {
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  int slack = -1;
  double s_base_kva = 1000.0;
  double v_base_kv = 4.16;
  double y_min = 0.9025;  // 0.95^2
  double y_max = 1.1025;  // 1.05^2
  double y_ref = 1.0;

  // topology derived by finalize(); buses in `order` are root-first
  std::vector<int> parent;
  std::vector<int> parent_branch;
  std::vector<std::vector<int>> children;  // outgoing branch indices per bus
  std::vector<int> order;

  int index_of(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
  }
  int require_bus(const std::string& id) const {
    int i = index_of(id);
    if (i < 0) throw Error(Err::UnknownBus, "bus '" + id + "'");
    return i;
  }

  bool single_phase() const {
    for (const auto& b : buses)
      if (b.phases != PhaseSet::single(Phase::a)) return false;
    return true;
  }

  std::vector<int> controllable_buses() const {
    std::vector<int> out;
    for (size_t i = 0; i < buses.size(); ++i)
      if (buses[i].controllable()) out.push_back(static_cast<int>(i));
    return out;
  }

  // Validates all type invariants and builds the rooted-tree topology.
  void finalize() {
    index_.clear();
    for (size_t i = 0; i < buses.size(); ++i) {
      if (!index_.emplace(buses[i].id, static_cast<int>(i)).second)
        throw Error(Err::DuplicateBusId, buses[i].id);
      if (buses[i].phases.empty())
        throw Error(Err::ParseError, "bus " + buses[i].id + " has empty phase set");
      if (buses[i].kinds.empty())
        throw Error(Err::ParseError, "bus " + buses[i].id + " has no kinds");
      for (int ph = 0; ph < 3; ++ph) {
        if (buses[i].shunt_c[ph] < 0)
          throw Error(Err::ParseError, "bus " + buses[i].id + " has negative capacitor");
        if (std::abs(buses[i].beta_s[ph] + buses[i].beta_z[ph] - 1.0) > 1e-9)
          throw Error(Err::ParseError, "bus " + buses[i].id + " has beta_s + beta_z != 1");
      }
      if (buses[i].capacity) buses[i].capacity->validate();
    }

    int n_slack = 0;
    for (size_t i = 0; i < buses.size(); ++i) {
      if (buses[i].is(BusKind::Slack)) {
        slack = static_cast<int>(i);
        ++n_slack;
      }
    }
    if (n_slack == 0) throw Error(Err::MissingSlack, "no slack bus");
    if (n_slack > 1) throw Error(Err::ParseError, "multiple slack buses");

    if (!(0 < y_min && y_min < y_ref && y_ref < y_max))
      throw Error(Err::ConfigValidation, "need 0 < y_min < y_ref < y_max");

    if (branches.size() + 1 != buses.size())
      throw Error(Err::NonTreeTopology, "|E| != |N| - 1");

    for (auto& br : branches) {
      const Bus& bf = buses.at(br.from);
      const Bus& bt = buses.at(br.to);
      if (!br.phases.subset_of(bf.phases) || !br.phases.subset_of(bt.phases))
        throw Error(Err::PhaseMismatch,
                    "branch " + bf.id + "-" + bt.id + " carries a phase absent at an endpoint");
      bool bad_r = false;
      br.phases.for_each([&](Phase p) {
        int i = phase_index(p);
        if (!(br.z(i, i).real() > 0)) bad_r = true;
      });
      if (bad_r)
        throw Error(Err::NonPositiveResistance, "branch " + bf.id + "-" + bt.id);
    }

    // Root the tree at the slack; reorient branches so `from` is upstream.
    size_t n = buses.size();
    std::vector<std::vector<std::pair<int, int>>> adj(n);  // (neighbor, branch)
    for (size_t e = 0; e < branches.size(); ++e) {
      adj[branches[e].from].push_back({branches[e].to, static_cast<int>(e)});
      adj[branches[e].to].push_back({branches[e].from, static_cast<int>(e)});
    }
    parent.assign(n, -1);
    parent_branch.assign(n, -1);
    children.assign(n, {});
    order.clear();
    std::vector<char> seen(n, 0);
    std::vector<int> stack{slack};
    seen[slack] = 1;
    while (!stack.empty()) {
      int m = stack.back();
      stack.pop_back();
      order.push_back(m);
      for (auto [nb, e] : adj[m]) {
        if (seen[nb]) continue;
        seen[nb] = 1;
        auto& br = branches[e];
        if (br.from != m) {
          std::swap(br.from, br.to);
          br.z.transposeInPlace();  // symmetric in practice; keep it coherent
        }
        parent[nb] = m;
        parent_branch[nb] = e;
        children[m].push_back(e);
        stack.push_back(nb);
      }
    }
    if (order.size() != n) throw Error(Err::NonTreeTopology, "network is not connected");

    // Radial consistency: every phase at a bus must be fed by its branch.
    for (size_t i = 0; i < n; ++i) {
      if (static_cast<int>(i) == slack) continue;
      const auto& br = branches[parent_branch[i]];
      if (!buses[i].phases.subset_of(br.phases))
        throw Error(Err::PhaseMismatch,
                    "bus " + buses[i].id + " has phases not carried by its feeding branch");
    }
  }

 private:
  std::map<std::string, int> index_;
};

namespace detail {
inline StatePartition kind_partition(BusKind k) {
  switch (k) {
    case BusKind::Slack: return {{"V"}, {"delta"}, {"p", "q"}};
    case BusKind::PQLoad: return {{}, {"p", "q"}, {"V", "delta"}};
    case BusKind::PQGeneration: return {{"p", "q"}, {}, {"V", "delta"}};
    case BusKind::PVGeneration: return {{"p", "V"}, {}, {"q", "delta"}};
  }
  return {};
}

inline bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}
}  // namespace detail

// Merge the per-kind rows for all roles a bus holds. A symbol controlled by
// any role stays in u; its uncontrollable counterpart survives as the split
// component p^c / q^c. Overlap on V or delta cannot be split and is an error.
inline StatePartition partition_state(const Bus& bus) {
  if (bus.kinds.empty()) throw Error(Err::ConfigValidation, "bus has no kinds");
  StatePartition out;
  for (BusKind k : bus.kinds) {
    auto part = detail::kind_partition(k);
    for (auto& s : part.u)
      if (!detail::contains(out.u, s)) out.u.push_back(s);
  }
  for (BusKind k : bus.kinds) {
    auto part = detail::kind_partition(k);
    for (auto& s : part.d) {
      if (detail::contains(out.u, s)) {
        if (s == "p" || s == "q") {
          std::string split = s + "^c";
          if (!detail::contains(out.d, split)) out.d.push_back(split);
        } else {
          throw Error(Err::ConflictingRoles,
                      "bus " + bus.id + ": symbol " + s + " both controlled and disturbed");
        }
      } else if (!detail::contains(out.d, s)) {
        out.d.push_back(s);
      }
    }
  }
  for (const std::string& s : {"V", "delta", "p", "q"}) {
    if (!detail::contains(out.u, s) && !detail::contains(out.d, s)) out.x_end.push_back(s);
  }
  return out;
}

}  // namespace dopf
