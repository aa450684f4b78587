#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "dopf/errors.hpp"
#include "dopf/network.hpp"

namespace dopf {

struct PfOptions {
  double tol = 1e-10;
  int max_sweeps = 100;
  double damping = 1.0;  // divergence is reported, not retried
};

struct PfResult {
  std::vector<Eigen::Vector3d> y;      // squared voltage magnitude per bus-phase
  std::vector<Eigen::Vector3cd> V;     // phasors (three-phase solver only)
  std::vector<Eigen::Vector3d> theta;  // radians
  std::vector<Eigen::Vector3d> branch_p;
  std::vector<Eigen::Vector3d> branch_q;
  std::vector<double> ell;  // single-phase squared current per branch
  int iterations = 0;
  double residual = 0;
  bool has_phasors = false;

  double y1(int bus) const { return y[bus](0); }
};

// Nonlinear single-phase DistFlow by backward flow accumulation and forward
// voltage drop, iterating the loss terms to a fixed point. net_p/net_q are
// nodal net consumption (load - generation + control), pu.
inline PfResult solve_distflow(const Network& net, const Eigen::VectorXd& net_p,
                               const Eigen::VectorXd& net_q, double y0,
                               const PfOptions& opt = {}) {
  if (!net.single_phase())
    throw Error(Err::ConfigValidation, "solve_distflow needs a single-phase network");
  const int nb = static_cast<int>(net.buses.size());
  const int ne = static_cast<int>(net.branches.size());
  if (net_p.size() != nb || net_q.size() != nb)
    throw Error(Err::DimensionMismatch, "injection vectors");

  Eigen::VectorXd y = Eigen::VectorXd::Constant(nb, y0);
  Eigen::VectorXd ell = Eigen::VectorXd::Zero(ne);
  Eigen::VectorXd P = Eigen::VectorXd::Zero(ne), Q = Eigen::VectorXd::Zero(ne);

  int sweep = 0;
  for (; sweep < opt.max_sweeps; ++sweep) {
    // backward: P_mn = r l + p_n + sum of child flows, children already done
    for (auto it = net.order.rbegin(); it != net.order.rend(); ++it) {
      int bus = *it;
      if (bus == net.slack) continue;
      int e = net.parent_branch[bus];
      const Branch& br = net.branches[e];
      double p = net_p(bus) + br.r1() * ell(e);
      double q = net_q(bus) - net.buses[bus].shunt_c[0] + br.x1() * ell(e);
      for (int ce : net.children[bus]) {
        p += P(ce);
        q += Q(ce);
      }
      P(e) = p;
      Q(e) = q;
    }
    double delta = 0;
    // current magnitudes from the sending-end voltage
    for (int e = 0; e < ne; ++e) {
      double l_new = (P(e) * P(e) + Q(e) * Q(e)) / y(net.branches[e].from);
      l_new = ell(e) + opt.damping * (l_new - ell(e));
      delta = std::max(delta, std::abs(l_new - ell(e)));
      ell(e) = l_new;
    }
    // forward: voltage drops from the root
    for (int bus : net.order) {
      if (bus == net.slack) continue;
      int e = net.parent_branch[bus];
      const Branch& br = net.branches[e];
      double r = br.r1(), x = br.x1();
      double y_new = y(net.parent[bus]) - 2 * (r * P(e) + x * Q(e)) + (r * r + x * x) * ell(e);
      y_new = y(bus) + opt.damping * (y_new - y(bus));
      delta = std::max(delta, std::abs(y_new - y(bus)));
      y(bus) = y_new;
      if (!(y(bus) > 0.05))  // also catches NaN blowup
        throw Error(Err::NoConvergence, "voltage collapse at bus " + net.buses[bus].id);
    }
    if (delta < opt.tol) break;
  }
  if (sweep >= opt.max_sweeps)
    throw Error(Err::NoConvergence, "distflow did not converge");

  PfResult res;
  res.y.assign(nb, Eigen::Vector3d::Zero());
  res.branch_p.assign(ne, Eigen::Vector3d::Zero());
  res.branch_q.assign(ne, Eigen::Vector3d::Zero());
  res.ell.assign(ne, 0.0);
  for (int b = 0; b < nb; ++b) res.y[b](0) = y(b);
  double resid = 0;
  for (int e = 0; e < ne; ++e) {
    res.branch_p[e](0) = P(e);
    res.branch_q[e](0) = Q(e);
    res.ell[e] = ell(e);
    resid = std::max(resid,
                     std::abs(ell(e) - (P(e) * P(e) + Q(e) * Q(e)) / y(net.branches[e].from)));
  }
  res.iterations = sweep + 1;
  res.residual = resid;
  return res;
}

// Nonlinear unbalanced three-phase ladder solver: backward current sweep
// i = (s(y)/V)* with the capacitor term -jc, forward KVL voltage update.
// demand/u are per-(bus, phase) complex powers, consumption-positive.
inline PfResult solve_3ph(const Network& net,
                          const std::vector<Eigen::Vector3cd>& demand,
                          const std::vector<Eigen::Vector3cd>& u, double y0,
                          const PfOptions& opt = {}) {
  const int nb = static_cast<int>(net.buses.size());
  const int ne = static_cast<int>(net.branches.size());
  if (static_cast<int>(demand.size()) != nb || static_cast<int>(u.size()) != nb)
    throw Error(Err::DimensionMismatch, "per-phase load vectors");

  using cd = std::complex<double>;
  const double v0 = std::sqrt(y0);
  Eigen::Vector3cd slack_v;
  slack_v << cd(v0, 0), v0 * std::polar(1.0, -2.0 * std::numbers::pi / 3.0),
      v0 * std::polar(1.0, 2.0 * std::numbers::pi / 3.0);

  std::vector<Eigen::Vector3cd> V(nb, slack_v);
  std::vector<Eigen::Vector3cd> I(ne, Eigen::Vector3cd::Zero());

  auto node_current = [&](int b) {
    Eigen::Vector3cd i = Eigen::Vector3cd::Zero();
    const Bus& bus = net.buses[b];
    bus.phases.for_each([&](Phase p) {
      int k = phase_index(p);
      double ybp = std::norm(V[b](k));
      cd s = (bus.beta_s[k] + bus.beta_z[k] * ybp) * demand[b](k) + u[b](k) -
             cd(0, bus.shunt_c[k]);
      i(k) = std::conj(s / V[b](k));
    });
    return i;
  };

  int iter = 0;
  double delta = 0;
  for (; iter < opt.max_sweeps; ++iter) {
    // backward current accumulation
    for (auto it = net.order.rbegin(); it != net.order.rend(); ++it) {
      int bus = *it;
      if (bus == net.slack) continue;
      int e = net.parent_branch[bus];
      Eigen::Vector3cd cur = node_current(bus);
      for (int ce : net.children[bus]) cur += I[ce];
      I[e] = cur;
    }
    // forward KVL
    delta = 0;
    for (int bus : net.order) {
      if (bus == net.slack) continue;
      int e = net.parent_branch[bus];
      const Branch& br = net.branches[e];
      Eigen::Vector3cd drop = br.z * I[e];
      net.buses[bus].phases.for_each([&](Phase p) {
        int k = phase_index(p);
        cd v_new = V[net.parent[bus]](k) - drop(k);
        if (opt.damping != 1.0) v_new = V[bus](k) + opt.damping * (v_new - V[bus](k));
        delta = std::max(delta, std::abs(v_new - V[bus](k)));
        V[bus](k) = v_new;
      });
    }
    if (delta < opt.tol) {
      ++iter;
      break;
    }
  }
  if (delta >= opt.tol) throw Error(Err::NoConvergence, "three-phase sweep did not converge");

  PfResult res;
  res.has_phasors = true;
  res.y.assign(nb, Eigen::Vector3d::Zero());
  res.theta.assign(nb, Eigen::Vector3d::Zero());
  res.V.assign(nb, Eigen::Vector3cd::Zero());
  res.branch_p.assign(ne, Eigen::Vector3d::Zero());
  res.branch_q.assign(ne, Eigen::Vector3d::Zero());
  for (int b = 0; b < nb; ++b) {
    net.buses[b].phases.for_each([&](Phase p) {
      int k = phase_index(p);
      res.V[b](k) = V[b](k);
      res.y[b](k) = std::norm(V[b](k));
      res.theta[b](k) = std::arg(V[b](k));
    });
  }
  for (int e = 0; e < ne; ++e) {
    // receiving-end power S_mn = V_n o I_mn^*
    int to = net.branches[e].to;
    net.branches[e].phases.for_each([&](Phase p) {
      int k = phase_index(p);
      cd s = V[to](k) * std::conj(I[e](k));
      res.branch_p[e](k) = s.real();
      res.branch_q[e](k) = s.imag();
    });
  }
  res.iterations = iter;
  res.residual = delta;
  return res;
}

}  // namespace dopf
