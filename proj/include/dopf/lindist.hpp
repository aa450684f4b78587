#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "dopf/powerflow.hpp"

namespace dopf {

// Balanced voltage-ratio matrix with alpha = (1/2)(-1 + j sqrt(3)):
//   Gamma[p][q] = V^p / V^q for a balanced positive-sequence set.
inline Eigen::Matrix3cd balanced_gamma() {
  using cd = std::complex<double>;
  const cd alpha(-0.5, std::sqrt(3.0) / 2.0);
  const cd alpha2 = alpha * alpha;
  Eigen::Matrix3cd g;
  g << cd(1, 0), alpha, alpha2,
       alpha2, cd(1, 0), alpha,
       alpha, alpha2, cd(1, 0);
  return g;
}

// M = Re(Gamma o Z*), N = Im(Gamma o Z*) restricted to the branch phases.
struct LinDistMats {
  Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d N = Eigen::Matrix3d::Zero();
};

inline LinDistMats build_lindist_mats(const Branch& br) {
  static const Eigen::Matrix3cd gamma = balanced_gamma();
  LinDistMats out;
  br.phases.for_each([&](Phase pi) {
    br.phases.for_each([&](Phase pj) {
      int i = phase_index(pi), j = phase_index(pj);
      std::complex<double> v = gamma(i, j) * std::conj(br.z(i, j));
      out.M(i, j) = v.real();
      out.N(i, j) = v.imag();
    });
  });
  return out;
}

// LinDist3Flow: lossless flow accumulation, linear magnitude and angle drops.
// The beta_z load coupling on y is resolved by a handful of fixed-point
// refinements; with beta_z = 0 a single pass is exact.
inline PfResult eval_lindist3flow(const Network& net,
                                  const std::vector<Eigen::Vector3cd>& demand,
                                  const std::vector<Eigen::Vector3cd>& u, double y0,
                                  int max_refinements = 12, double tol = 1e-10) {
  const int nb = static_cast<int>(net.buses.size());
  const int ne = static_cast<int>(net.branches.size());
  if (static_cast<int>(demand.size()) != nb || static_cast<int>(u.size()) != nb)
    throw Error(Err::DimensionMismatch, "per-phase load vectors");

  bool voltage_sensitive = false;
  for (const auto& b : net.buses)
    for (double bz : b.beta_z)
      if (bz != 0) voltage_sensitive = true;

  std::vector<LinDistMats> mats(ne);
  for (int e = 0; e < ne; ++e) mats[e] = build_lindist_mats(net.branches[e]);

  std::vector<Eigen::Vector3d> y(nb, Eigen::Vector3d::Constant(y0));
  std::vector<Eigen::Vector3cd> S(ne, Eigen::Vector3cd::Zero());

  int passes = voltage_sensitive ? max_refinements : 1;
  double delta = 0;
  for (int pass = 0; pass < passes; ++pass) {
    // node complex loads at the current y
    std::vector<Eigen::Vector3cd> s(nb, Eigen::Vector3cd::Zero());
    for (int b = 0; b < nb; ++b) {
      net.buses[b].phases.for_each([&](Phase p) {
        int k = phase_index(p);
        s[b](k) = (net.buses[b].beta_s[k] + net.buses[b].beta_z[k] * y[b](k)) * demand[b](k) +
                  u[b](k) - std::complex<double>(0, net.buses[b].shunt_c[k]);
      });
    }
    // lossless backward accumulation
    for (auto it = net.order.rbegin(); it != net.order.rend(); ++it) {
      int bus = *it;
      if (bus == net.slack) continue;
      Eigen::Vector3cd flow = s[bus];
      for (int ce : net.children[bus]) flow += S[ce];
      S[net.parent_branch[bus]] = flow;
    }
    // forward magnitude drops
    delta = 0;
    for (int bus : net.order) {
      if (bus == net.slack) continue;
      int e = net.parent_branch[bus];
      net.buses[bus].phases.for_each([&](Phase p) {
        int k = phase_index(p);
        double drop = 0;
        net.branches[e].phases.for_each([&](Phase q) {
          int l = phase_index(q);
          drop += 2.0 * (mats[e].M(k, l) * S[e](l).real() - mats[e].N(k, l) * S[e](l).imag());
        });
        double y_new = y[net.parent[bus]](k) - drop;
        delta = std::max(delta, std::abs(y_new - y[bus](k)));
        y[bus](k) = y_new;
      });
    }
    if (delta < tol) break;
  }
  if (voltage_sensitive && delta >= tol)
    throw Error(Err::NoConvergence, "lindist3flow beta_z refinement did not converge");

  PfResult res;
  res.y.assign(nb, Eigen::Vector3d::Zero());
  res.theta.assign(nb, Eigen::Vector3d::Zero());
  res.branch_p.assign(ne, Eigen::Vector3d::Zero());
  res.branch_q.assign(ne, Eigen::Vector3d::Zero());
  for (int b = 0; b < nb; ++b)
    net.buses[b].phases.for_each([&](Phase p) { res.y[b](phase_index(p)) = y[b](phase_index(p)); });
  for (int e = 0; e < ne; ++e) {
    net.branches[e].phases.for_each([&](Phase p) {
      int k = phase_index(p);
      res.branch_p[e](k) = S[e](k).real();
      res.branch_q[e](k) = S[e](k).imag();
    });
  }
  // angle drops, reported but never constrained
  const double two_thirds_pi = 2.0 * std::numbers::pi / 3.0;
  for (int bus : net.order) {
    Eigen::Vector3d base;
    base << 0.0, -two_thirds_pi, two_thirds_pi;
    if (bus == net.slack) {
      res.theta[bus] = base;
      continue;
    }
    int e = net.parent_branch[bus];
    net.buses[bus].phases.for_each([&](Phase p) {
      int k = phase_index(p);
      double d = 0;
      net.branches[e].phases.for_each([&](Phase q) {
        int l = phase_index(q);
        d += mats[e].N(k, l) * res.branch_p[e](l) + mats[e].M(k, l) * res.branch_q[e](l);
      });
      res.theta[bus](k) = res.theta[net.parent[bus]](k) + d;
    });
  }
  res.iterations = passes;
  res.residual = delta;
  return res;
}

// High-order term H = (V_m - V_n) o (V_m - V_n)* of the magnitude equation,
// per phase; audits the "negligible against 2MP - 2NQ" assumption.
inline Eigen::Vector3d hmn_diagnostic(const Network& net, const PfResult& pf, int branch) {
  if (!pf.has_phasors) throw Error(Err::ConfigValidation, "hmn needs a phasor solution");
  const Branch& br = net.branches.at(branch);
  Eigen::Vector3d h = Eigen::Vector3d::Zero();
  br.phases.for_each([&](Phase p) {
    int k = phase_index(p);
    h(k) = std::norm(pf.V[br.from](k) - pf.V[br.to](k));
  });
  return h;
}

}  // namespace dopf
