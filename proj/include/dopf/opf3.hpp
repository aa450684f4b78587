#pragma once

#include <map>
#include <vector>

#include "dopf/lindist.hpp"
#include "dopf/opf.hpp"

namespace dopf {

namespace detail3ph {

struct Index {
  int n_var = 0;
  std::map<std::pair<int, int>, int> y;             // (bus, phase) -> var
  std::map<std::pair<int, int>, int> P, Q;          // (branch, phase) -> var
  std::map<std::tuple<int, int, bool>, int> u;      // (bus, phase, is_q) -> var
  std::vector<DerChannel> ders;

  bool has_u(int bus, int ph, bool is_q) const { return u.count({bus, ph, is_q}) > 0; }
};

inline Index make_index(const Network& net, const OpfConfig& cfg) {
  Index ix;
  int next = 0;
  for (size_t b = 0; b < net.buses.size(); ++b)
    net.buses[b].phases.for_each(
        [&](Phase p) { ix.y[{static_cast<int>(b), phase_index(p)}] = next++; });
  for (size_t e = 0; e < net.branches.size(); ++e)
    net.branches[e].phases.for_each([&](Phase p) {
      ix.P[{static_cast<int>(e), phase_index(p)}] = next++;
      ix.Q[{static_cast<int>(e), phase_index(p)}] = next++;
    });
  for (int b : net.controllable_buses()) {
    auto ch = cfg.channels_for(net.buses[b].id);
    net.buses[b].phases.for_each([&](Phase p) {
      int k = phase_index(p);
      if (ch.p) {
        ix.u[{b, k, false}] = next++;
        ix.ders.push_back({b, k, false});
      }
      if (ch.q) {
        ix.u[{b, k, true}] = next++;
        ix.ders.push_back({b, k, true});
      }
    });
  }
  ix.n_var = next;
  return ix;
}

}  // namespace detail3ph

// Voltage-balancing OPF over the linear three-phase model: nodal load
// constraints, lossless flow accumulation, magnitude drops, voltage box and
// per-phase capacity disks; objective sum over nodes of the squared
// inter-phase spread plus rho |u|^2.
inline conic::Problem build_opf_3ph(const Network& net, const Scenario& sc,
                                    const OpfConfig& cfg,
                                    detail3ph::Index* index_out = nullptr) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  auto ix = detail3ph::make_index(net, cfg);
  const int nb = static_cast<int>(net.buses.size());
  const int ne = static_cast<int>(net.branches.size());
  const int n = ix.n_var;
  if (static_cast<int>(sc.d.size()) != nb)
    throw Error(Err::MissingPhaseData, "scenario does not cover the network");

  std::vector<LinDistMats> mats(ne);
  for (int e = 0; e < ne; ++e) mats[e] = build_lindist_mats(net.branches[e]);

  // count equality rows: slack phases + flow balance and magnitude drop per
  // (branch, phase)
  int p_rows = net.buses[net.slack].phases.count();
  for (int e = 0; e < ne; ++e) p_rows += 2 * net.branches[e].phases.count();
  for (int e = 0; e < ne; ++e) p_rows += net.branches[e].phases.count();

  MatrixXd A = MatrixXd::Zero(p_rows, n);
  VectorXd b = VectorXd::Zero(p_rows);
  int row = 0;
  net.buses[net.slack].phases.for_each([&](Phase p) {
    A(row, ix.y.at({net.slack, phase_index(p)})) = 1;
    b(row++) = cfg.slack_y;
  });

  for (int e = 0; e < ne; ++e) {
    const Branch& br = net.branches[e];
    int nbus = br.to;
    const Bus& bus = net.buses[nbus];
    br.phases.for_each([&](Phase p) {
      int k = phase_index(p);
      const DerRecord& rec = sc.d[nbus][k];
      double dp = rec.p_c - rec.p_g;
      double dq = rec.q_c;
      // P_e = beta_s dp + beta_z dp y + u_p + sum child P
      A(row, ix.P.at({e, k})) = 1;
      A(row, ix.y.at({nbus, k})) = -bus.beta_z[k] * dp;
      for (int ce : net.children[nbus])
        if (net.branches[ce].phases.has(p)) A(row, ix.P.at({ce, k})) = -1;
      if (ix.has_u(nbus, k, false)) A(row, ix.u.at({nbus, k, false})) = -1;
      b(row++) = bus.beta_s[k] * dp;
      // Q_e = beta_s dq + beta_z dq y + u_q - c + sum child Q
      A(row, ix.Q.at({e, k})) = 1;
      A(row, ix.y.at({nbus, k})) = -bus.beta_z[k] * dq;
      for (int ce : net.children[nbus])
        if (net.branches[ce].phases.has(p)) A(row, ix.Q.at({ce, k})) = -1;
      if (ix.has_u(nbus, k, true)) A(row, ix.u.at({nbus, k, true})) = -1;
      b(row++) = bus.beta_s[k] * dq - bus.shunt_c[k];
    });
    // y_m - y_n = sum_psi 2 M P - 2 N Q
    br.phases.for_each([&](Phase p) {
      int k = phase_index(p);
      A(row, ix.y.at({br.from, k})) = 1;
      A(row, ix.y.at({br.to, k})) = -1;
      br.phases.for_each([&](Phase q) {
        int l = phase_index(q);
        A(row, ix.P.at({e, l})) = -2 * mats[e].M(k, l);
        A(row, ix.Q.at({e, l})) = 2 * mats[e].N(k, l);
      });
      b(row++) = 0;
    });
  }

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
    net.buses[bus].phases.for_each([&](Phase p) {
      int k = phase_index(p);
      add_row({{ix.y.at({bus, k}), 1.0}}, cfg.y_max);
      add_row({{ix.y.at({bus, k}), -1.0}}, -cfg.y_min);
    });
  }
  struct DiskCone {
    int bus, phase;
    double s;
  };
  std::vector<DiskCone> disks;
  for (int bus : net.controllable_buses()) {
    auto ch = cfg.channels_for(net.buses[bus].id);
    if (!ch.p && !ch.q) continue;
    net.buses[bus].phases.for_each([&](Phase p) {
      int k = phase_index(p);
      CapacityModel cap = capacity_at(net.buses[bus], sc.d[bus][k]);
      switch (cap.kind) {
        case CapacityModel::Kind::Box:
          if (ch.p) {
            add_row({{ix.u.at({bus, k, false}), 1.0}}, cap.p_max);
            add_row({{ix.u.at({bus, k, false}), -1.0}}, -cap.p_min);
          }
          if (ch.q) {
            add_row({{ix.u.at({bus, k, true}), 1.0}}, cap.q_max);
            add_row({{ix.u.at({bus, k, true}), -1.0}}, -cap.q_min);
          }
          break;
        case CapacityModel::Kind::PvResidual: {
          if (ch.p)
            throw Error(Err::ConfigValidation,
                        "PvResidual capacity admits reactive control only");
          double qb = cap.pv_q_bound(sc.d[bus][k].p_g);
          add_row({{ix.u.at({bus, k, true}), 1.0}}, qb);
          add_row({{ix.u.at({bus, k, true}), -1.0}}, qb);
          break;
        }
        case CapacityModel::Kind::Disk:
          if (ch.p && ch.q) {
            disks.push_back({bus, k, cap.s_max});
          } else {
            int col = ix.u.at({bus, k, ch.q});
            add_row({{col, 1.0}}, cap.s_max);
            add_row({{col, -1.0}}, cap.s_max);
          }
          break;
      }
    });
  }

  std::vector<conic::ConeBlock> cones;
  if (!h_vals.empty()) cones.push_back({conic::ConeBlock::Kind::NonNeg,
                                        static_cast<int>(h_vals.size())});
  for (const auto& d : disks) {
    add_row({}, d.s);
    add_row({{ix.u.at({d.bus, d.phase, false}), -1.0}}, 0.0);
    add_row({{ix.u.at({d.bus, d.phase, true}), -1.0}}, 0.0);
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

  // objective: sum_n sum_{phi != psi} (y_phi - y_psi)^2 + rho |u|^2
  prob.q = VectorXd::Zero(n);
  prob.P = MatrixXd::Zero(n, n);
  for (int bus = 0; bus < nb; ++bus) {
    std::vector<int> phases;
    net.buses[bus].phases.for_each([&](Phase p) { phases.push_back(phase_index(p)); });
    for (size_t i = 0; i < phases.size(); ++i)
      for (size_t j = i + 1; j < phases.size(); ++j) {
        int yi = ix.y.at({bus, phases[i]});
        int yj = ix.y.at({bus, phases[j]});
        prob.P(yi, yi) += 4;
        prob.P(yj, yj) += 4;
        prob.P(yi, yj) += -4;
        prob.P(yj, yi) += -4;
      }
  }
  for (const auto& [key, col] : ix.u) prob.P(col, col) += 2 * cfg.rho;

  if (index_out) *index_out = ix;
  return prob;
}

struct Opf3Solution {
  conic::Status status = conic::Status::NumericalBreakdown;
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<DerChannel> channels;
  Eigen::VectorXd u;
  std::vector<Eigen::Vector3d> y;  // per bus, model prediction
  std::vector<Eigen::Vector3cd> u_complex;  // per (bus, phase), for replay

  bool usable() const { return status == conic::Status::Optimal; }
};

inline Opf3Solution solve_opf_3ph(const Network& net, const Scenario& sc,
                                  const OpfConfig& cfg) {
  detail3ph::Index ix;
  conic::Problem prob = build_opf_3ph(net, sc, cfg, &ix);
  conic::Solution s = conic::solve(prob, cfg.solver);

  Opf3Solution out;
  out.status = s.status;
  out.channels = ix.ders;
  if (s.z.size() != prob.n) return out;
  out.objective = s.objective;
  out.y.assign(net.buses.size(), Eigen::Vector3d::Zero());
  for (const auto& [key, col] : ix.y) out.y[key.first](key.second) = s.z(col);
  out.u.resize(ix.ders.size());
  out.u_complex.assign(net.buses.size(), Eigen::Vector3cd::Zero());
  for (size_t k = 0; k < ix.ders.size(); ++k) {
    const auto& d = ix.ders[k];
    out.u(k) = s.z(ix.u.at({d.bus, d.phase, d.is_q}));
    if (d.is_q)
      out.u_complex[d.bus](d.phase).imag(out.u(k));
    else
      out.u_complex[d.bus](d.phase).real(out.u(k));
  }
  return out;
}

// max over buses of the max inter-phase |y_phi - y_psi|
inline double max_interphase_gap(const Network& net, const std::vector<Eigen::Vector3d>& y) {
  double gap = 0;
  for (size_t b = 0; b < net.buses.size(); ++b) {
    std::vector<int> ph;
    net.buses[b].phases.for_each([&](Phase p) { ph.push_back(phase_index(p)); });
    for (size_t i = 0; i < ph.size(); ++i)
      for (size_t j = i + 1; j < ph.size(); ++j)
        gap = std::max(gap, std::abs(y[b](ph[i]) - y[b](ph[j])));
  }
  return gap;
}

}  // namespace dopf
