#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dopf/conic/problem.hpp"
#include "dopf/conic/solver.hpp"
#include "dopf/powerflow.hpp"
#include "dopf/scenario.hpp"

namespace dopf {

// Capacity in force at one timestep: the scenario's s_cap overrides the rated
// apparent power when present.
inline CapacityModel capacity_at(const Bus& bus, const DerRecord& rec) {
  CapacityModel cap = *bus.capacity;
  if (cap.kind != CapacityModel::Kind::Box && rec.s_cap > 0) cap.s_max = rec.s_cap;
  return cap;
}

struct OpfChannels {
  bool p = false;
  bool q = true;
};

struct OpfConfig {
  // single-phase objective weights: alpha sum(r l) + beta sum((y - y_ref)^2)
  // + gamma (P01^2 + Q01^2)
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 0.0;
  double rho = 0.01;  // three-phase control-effort penalty
  double y_ref = 1.0;
  double y_min = 0.9025;
  double y_max = 1.1025;
  double slack_y = 1.0;
  OpfChannels default_channels;
  std::map<std::string, OpfChannels> channels;  // per-bus overrides
  bool exclude_inexact = true;                  // drop flagged labels from training
  conic::Settings solver;

  OpfChannels channels_for(const std::string& id) const {
    auto it = channels.find(id);
    return it == channels.end() ? default_channels : it->second;
  }

  static OpfConfig from_network(const Network& net) {
    OpfConfig c;
    c.y_ref = net.y_ref;
    c.y_min = net.y_min;
    c.y_max = net.y_max;
    return c;
  }

  // paper case presets
  static OpfConfig case1(const Network& net) {
    OpfConfig c = from_network(net);
    c.alpha = 1.0;
    c.beta = 2e-4;
    c.gamma = 0.0;
    c.default_channels = {false, true};  // reactive support only
    return c;
  }
  static OpfConfig case2(const Network& net) {
    OpfConfig c = from_network(net);
    c.alpha = 1.0;
    c.beta = 0.0;
    c.gamma = 1e3;
    c.default_channels = {true, false};  // real power localization
    return c;
  }
  static OpfConfig case3ph(const Network& net) {
    OpfConfig c = from_network(net);
    c.rho = 0.01;
    c.default_channels = {true, true};
    return c;
  }
};

// One controllable output channel (bus, phase slot, p-or-q).
struct DerChannel {
  int bus = -1;
  int phase = 0;
  bool is_q = true;
};

struct OPFSolution {
  conic::Status status = conic::Status::NumericalBreakdown;
  bool inexact = false;
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<DerChannel> channels;
  Eigen::VectorXd u;              // aligned with channels
  Eigen::VectorXd y;              // per (bus) or flattened (bus,phase)
  Eigen::VectorXd ell;            // single-phase only
  Eigen::VectorXd branch_p, branch_q;
  Eigen::VectorXd gap;            // per-branch exactness gap, single-phase only
  double max_gap = 0;

  bool usable() const { return status == conic::Status::Optimal; }
};

namespace detail1ph {

struct Index {
  int nb = 0, ne = 0;
  int n_var = 0;
  std::vector<DerChannel> ders;
  std::map<std::pair<int, int>, int> u_index;  // (bus, is_q) -> var

  int y(int b) const { return b; }
  int l(int e) const { return nb + e; }
  int P(int e) const { return nb + ne + e; }
  int Q(int e) const { return nb + 2 * ne + e; }
  int u(int bus, bool is_q) const { return u_index.at({bus, is_q}); }
};

inline Index make_index(const Network& net, const OpfConfig& cfg) {
  Index ix;
  ix.nb = static_cast<int>(net.buses.size());
  ix.ne = static_cast<int>(net.branches.size());
  int next = ix.nb + 3 * ix.ne;
  for (int b : net.controllable_buses()) {
    auto ch = cfg.channels_for(net.buses[b].id);
    if (ch.p) {
      ix.u_index[{b, false}] = next++;
      ix.ders.push_back({b, 0, false});
    }
    if (ch.q) {
      ix.u_index[{b, true}] = next++;
      ix.ders.push_back({b, 0, true});
    }
  }
  ix.n_var = next;
  return ix;
}

}  // namespace detail1ph

// Assembles the relaxed branch-flow OPF as a conic problem: DistFlow
// equalities, rotated second-order cones for l y >= P^2 + Q^2, voltage box,
// and per-DER capacity sets.
inline conic::Problem build_opf_1ph(const Network& net, const Scenario& sc,
                                    const OpfConfig& cfg,
                                    detail1ph::Index* index_out = nullptr) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  if (!net.single_phase())
    throw Error(Err::ConfigValidation, "build_opf_1ph needs a single-phase network");
  if (cfg.alpha <= 0)
    throw Error(Err::ConfigValidation,
                "relaxation exactness needs alpha > 0 (objective must increase in l)");

  auto ix = detail1ph::make_index(net, cfg);
  const int nb = ix.nb, ne = ix.ne, n = ix.n_var;

  // equalities: slack voltage + P,Q balance and voltage drop per branch
  const int p_rows = 1 + 3 * ne;
  MatrixXd A = MatrixXd::Zero(p_rows, n);
  VectorXd b = VectorXd::Zero(p_rows);
  int row = 0;
  A(row, ix.y(net.slack)) = 1;
  b(row++) = cfg.slack_y;

  for (int e = 0; e < ne; ++e) {
    const Branch& br = net.branches[e];
    int nbus = br.to;
    const DerRecord& rec = sc.at(nbus);
    // P_mn - r l - sum child P - u_p = p_c - p_g
    A(row, ix.P(e)) = 1;
    A(row, ix.l(e)) = -br.r1();
    for (int ce : net.children[nbus]) A(row, ix.P(ce)) = -1;
    if (ix.u_index.count({nbus, false})) A(row, ix.u(nbus, false)) = -1;
    b(row++) = rec.p_c - rec.p_g;
    // Q_mn - x l - sum child Q - u_q = q_c - c
    A(row, ix.Q(e)) = 1;
    A(row, ix.l(e)) = -br.x1();
    for (int ce : net.children[nbus]) A(row, ix.Q(ce)) = -1;
    if (ix.u_index.count({nbus, true})) A(row, ix.u(nbus, true)) = -1;
    b(row++) = rec.q_c - net.buses[nbus].shunt_c[0];
    // y_m - y_n - 2 r P - 2 x Q + (r^2 + x^2) l = 0
    A(row, ix.y(br.from)) = 1;
    A(row, ix.y(br.to)) = -1;
    A(row, ix.P(e)) = -2 * br.r1();
    A(row, ix.Q(e)) = -2 * br.x1();
    A(row, ix.l(e)) = br.r1() * br.r1() + br.x1() * br.x1();
    b(row++) = 0;
  }

  // cone rows: one nonneg block (voltage box + box/pv capacities), then SOCs
  struct Entry {
    int row, col;
    double v;
  };
  std::vector<Entry> g_trip;
  std::vector<double> h_vals;
  auto add_row = [&](std::initializer_list<std::pair<int, double>> coeffs, double h) {
    int r = static_cast<int>(h_vals.size());
    for (auto [col, v] : coeffs) g_trip.push_back({r, col, v});
    h_vals.push_back(h);
  };

  for (int bus = 0; bus < nb; ++bus) {
    if (bus == net.slack) continue;
    add_row({{ix.y(bus), 1.0}}, cfg.y_max);    // y <= y_max
    add_row({{ix.y(bus), -1.0}}, -cfg.y_min);  // y >= y_min
  }
  std::vector<int> disk_socs;  // buses with a 2-channel disk cone
  for (int bus : net.controllable_buses()) {
    auto ch = cfg.channels_for(net.buses[bus].id);
    if (!ch.p && !ch.q) continue;
    CapacityModel cap = capacity_at(net.buses[bus], sc.at(bus));
    switch (cap.kind) {
      case CapacityModel::Kind::Box:
        if (ch.p) {
          add_row({{ix.u(bus, false), 1.0}}, cap.p_max);
          add_row({{ix.u(bus, false), -1.0}}, -cap.p_min);
        }
        if (ch.q) {
          add_row({{ix.u(bus, true), 1.0}}, cap.q_max);
          add_row({{ix.u(bus, true), -1.0}}, -cap.q_min);
        }
        break;
      case CapacityModel::Kind::PvResidual: {
        if (ch.p)
          throw Error(Err::ConfigValidation,
                      "PvResidual capacity admits reactive control only");
        double qb = cap.pv_q_bound(sc.at(bus).p_g);  // throws InfeasibleCapacity
        add_row({{ix.u(bus, true), 1.0}}, qb);
        add_row({{ix.u(bus, true), -1.0}}, qb);
        break;
      }
      case CapacityModel::Kind::Disk:
        if (ch.p && ch.q) {
          disk_socs.push_back(bus);
        } else {
          int col = ix.u(bus, ch.q);
          add_row({{col, 1.0}}, cap.s_max);
          add_row({{col, -1.0}}, cap.s_max);
        }
        break;
    }
  }

  std::vector<conic::ConeBlock> cones;
  int nn_rows = static_cast<int>(h_vals.size());
  if (nn_rows) cones.push_back({conic::ConeBlock::Kind::NonNeg, nn_rows});

  // rotated cone l y >= P^2 + Q^2 as (l + y, l - y, 2P, 2Q) in SOC4
  for (int e = 0; e < ne; ++e) {
    int m = net.branches[e].from;
    add_row({{ix.l(e), -1.0}, {ix.y(m), -1.0}}, 0.0);
    add_row({{ix.l(e), -1.0}, {ix.y(m), 1.0}}, 0.0);
    add_row({{ix.P(e), -2.0}}, 0.0);
    add_row({{ix.Q(e), -2.0}}, 0.0);
    cones.push_back({conic::ConeBlock::Kind::Soc, 4});
  }
  for (int bus : disk_socs) {
    CapacityModel cap = capacity_at(net.buses[bus], sc.at(bus));
    add_row({}, cap.s_max);
    add_row({{ix.u(bus, false), -1.0}}, 0.0);
    add_row({{ix.u(bus, true), -1.0}}, 0.0);
    cones.push_back({conic::ConeBlock::Kind::Soc, 3});
  }

  conic::Problem prob;
  prob.n = n;
  prob.A = A;
  prob.b = b;
  int m_rows = static_cast<int>(h_vals.size());
  prob.G = MatrixXd::Zero(m_rows, n);
  for (const auto& t : g_trip) prob.G(t.row, t.col) = t.v;
  prob.h = Eigen::Map<VectorXd>(h_vals.data(), m_rows);
  prob.cones = cones;

  prob.q = VectorXd::Zero(n);
  prob.P = MatrixXd::Zero(n, n);
  for (int e = 0; e < ne; ++e) prob.q(ix.l(e)) = cfg.alpha * net.branches[e].r1();
  if (cfg.beta > 0) {
    for (int bus = 0; bus < nb; ++bus) {
      prob.P(ix.y(bus), ix.y(bus)) += 2 * cfg.beta;
      prob.q(ix.y(bus)) += -2 * cfg.beta * cfg.y_ref;
    }
  }
  if (cfg.gamma > 0) {
    const auto& top = net.children[net.slack];
    for (int e1 : top)
      for (int e2 : top) {
        prob.P(ix.P(e1), ix.P(e2)) += 2 * cfg.gamma;
        prob.P(ix.Q(e1), ix.Q(e2)) += 2 * cfg.gamma;
      }
  }

  if (index_out) *index_out = ix;
  return prob;
}

// constant term of the objective left out of the conic form
inline double opf_objective_offset(const Network& net, const OpfConfig& cfg) {
  return cfg.beta * cfg.y_ref * cfg.y_ref * static_cast<double>(net.buses.size());
}

inline OPFSolution solve_opf_1ph(const Network& net, const Scenario& sc, const OpfConfig& cfg) {
  detail1ph::Index ix;
  conic::Problem prob = build_opf_1ph(net, sc, cfg, &ix);
  conic::Solution s = conic::solve(prob, cfg.solver);

  OPFSolution out;
  out.status = s.status;
  out.channels = ix.ders;
  const int nb = ix.nb, ne = ix.ne;
  if (s.z.size() != prob.n) return out;

  out.y.resize(nb);
  for (int bus = 0; bus < nb; ++bus) out.y(bus) = s.z(ix.y(bus));
  out.ell.resize(ne);
  out.branch_p.resize(ne);
  out.branch_q.resize(ne);
  out.gap.resize(ne);
  out.max_gap = 0;
  for (int e = 0; e < ne; ++e) {
    out.ell(e) = s.z(ix.l(e));
    out.branch_p(e) = s.z(ix.P(e));
    out.branch_q(e) = s.z(ix.Q(e));
    double ym = s.z(ix.y(net.branches[e].from));
    out.gap(e) = out.ell(e) -
                 (out.branch_p(e) * out.branch_p(e) + out.branch_q(e) * out.branch_q(e)) / ym;
    out.max_gap = std::max(out.max_gap, out.gap(e));
  }
  out.u.resize(ix.ders.size());
  for (size_t k = 0; k < ix.ders.size(); ++k)
    out.u(k) = s.z(ix.u(ix.ders[k].bus, ix.ders[k].is_q));
  out.objective = s.objective + opf_objective_offset(net, cfg);
  out.inexact = out.max_gap > 1e-6;
  return out;
}

// Recomputes the single-phase objective terms from a nonlinear power-flow
// solution; used to score closed-loop runs on the physics of record.
inline double opf_objective_from_pf(const Network& net, const PfResult& pf,
                                    const OpfConfig& cfg) {
  double loss_term = 0;
  for (size_t e = 0; e < net.branches.size(); ++e)
    loss_term += net.branches[e].r1() * pf.ell[e];
  double volt_term = 0;
  for (size_t b = 0; b < net.buses.size(); ++b) {
    double d = pf.y[b](0) - cfg.y_ref;
    volt_term += d * d;
  }
  double sub_p = 0, sub_q = 0;
  for (int e : net.children[net.slack]) {
    sub_p += pf.branch_p[e](0);
    sub_q += pf.branch_q[e](0);
  }
  return cfg.alpha * loss_term + cfg.beta * volt_term +
         cfg.gamma * (sub_p * sub_p + sub_q * sub_q);
}

}  // namespace dopf
