#pragma once

#include <algorithm>
#include <cmath>

#include "dopf/errors.hpp"

namespace dopf {

// Inverter capacity set, per unit. Three shapes:
//   Disk:       up^2 + uq^2 <= s_max^2
//   Box:        p_min <= up <= p_max, q_min <= uq <= q_max
//   PvResidual: |uq| <= sqrt(s_max^2 - p_g^2), reactive headroom left after
//               the PV real injection p_g(t).
struct CapacityModel {
  enum class Kind { Disk, Box, PvResidual };

  Kind kind = Kind::Disk;
  double s_max = 0;
  double p_min = 0, p_max = 0, q_min = 0, q_max = 0;

  static CapacityModel disk(double s) {
    CapacityModel m;
    m.kind = Kind::Disk;
    m.s_max = s;
    m.validate();
    return m;
  }
  static CapacityModel box(double pmin, double pmax, double qmin, double qmax) {
    CapacityModel m;
    m.kind = Kind::Box;
    m.p_min = pmin;
    m.p_max = pmax;
    m.q_min = qmin;
    m.q_max = qmax;
    m.validate();
    return m;
  }
  static CapacityModel pv_residual(double s) {
    CapacityModel m;
    m.kind = Kind::PvResidual;
    m.s_max = s;
    m.validate();
    return m;
  }

  void validate() const {
    if (kind == Kind::Disk || kind == Kind::PvResidual) {
      if (!(s_max > 0)) throw Error(Err::ConfigValidation, "capacity s_max must be > 0");
    } else {
      if (p_min > p_max || q_min > q_max)
        throw Error(Err::ConfigValidation, "capacity box bounds out of order");
    }
  }

  // Reactive bound sqrt(s^2 - pg^2); errors when the scenario violates pg <= s.
  double pv_q_bound(double p_g) const {
    if (p_g > s_max)
      throw Error(Err::InfeasibleCapacity, "PV real generation exceeds apparent capacity");
    return std::sqrt(std::max(0.0, s_max * s_max - p_g * p_g));
  }

  // Projection onto the capacity set. chan_p/chan_q mark the live channels;
  // dead channels are forced to zero. p_g only matters for PvResidual.
  void saturate(double& up, double& uq, bool chan_p, bool chan_q, double p_g) const {
    if (!chan_p) up = 0;
    if (!chan_q) uq = 0;
    switch (kind) {
      case Kind::Disk: {
        double n = std::hypot(up, uq);
        if (n > s_max && n > 0) {
          up *= s_max / n;
          uq *= s_max / n;
        }
        break;
      }
      case Kind::Box:
        up = std::clamp(up, p_min, p_max);
        uq = std::clamp(uq, q_min, q_max);
        break;
      case Kind::PvResidual: {
        double qb = pv_q_bound(p_g);
        up = 0;  // PvResidual inverters dispatch reactive power only
        uq = std::clamp(uq, -qb, qb);
        break;
      }
    }
  }

  // True when (up, uq) lies outside the set by more than tol.
  bool violates(double up, double uq, double p_g, double tol = 1e-9) const {
    switch (kind) {
      case Kind::Disk:
        return std::hypot(up, uq) > s_max + tol;
      case Kind::Box:
        return up < p_min - tol || up > p_max + tol || uq < q_min - tol || uq > q_max + tol;
      case Kind::PvResidual: {
        double qb = pv_q_bound(p_g);
        return std::abs(uq) > qb + tol;
      }
    }
    return false;
  }
};

}  // namespace dopf
