#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <vector>

#include "dopf/conic/problem.hpp"

namespace dopf::conic {

enum class Status { Optimal, Infeasible, Unbounded, MaxIters, NumericalBreakdown };

inline const char* status_name(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::MaxIters: return "max_iters";
    case Status::NumericalBreakdown: return "numerical_breakdown";
  }
  return "?";
}

struct Settings {
  double tol = 1e-8;
  int max_iters = 200;
  bool polish = true;  // active-set Newton refinement after an Optimal exit
};

struct Solution {
  Eigen::VectorXd z;   // primal variables
  Eigen::VectorXd s;   // cone slacks
  Eigen::VectorXd y;   // equality duals
  Eigen::VectorXd zc;  // cone duals
  Status status = Status::NumericalBreakdown;
  double res_primal = std::numeric_limits<double>::infinity();
  double res_dual = std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();  // relative duality gap
  double pobj = 0, dobj = 0;
  int iterations = 0;
  double objective = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Nesterov-Todd scaling for the product of nonneg orthants and second-order
// cones, stored per block.
struct Scaling {
  struct Block {
    bool soc = false;
    VectorXd w;      // nonneg: sqrt(s/z) elementwise
    double eta = 1;  // soc
    VectorXd wbar;   // soc, unit hyperbolic norm
  };
  std::vector<Block> blocks;
  VectorXd lambda;  // scaled point W z = W^{-1} s
};

class Hsde {
 public:
  Hsde(const VectorXd& c, const MatrixXd& A, const VectorXd& b, const MatrixXd& G,
       const VectorXd& h, const std::vector<ConeBlock>& cones, Settings st)
      : c_(c), A_(A), b_(b), G_(G), h_(h), cones_(cones), st_(st) {
    n_ = static_cast<int>(c.size());
    p_ = static_cast<int>(A.rows());
    m_ = static_cast<int>(G.rows());
    nu_ = 0;
    for (const auto& blk : cones_) nu_ += blk.kind == ConeBlock::Kind::NonNeg ? blk.dim : 1;
    data_scale_ = std::max({1.0, inf_norm(A_), inf_norm(G_), c_.size() ? c_.cwiseAbs().maxCoeff() : 0.0});
  }

  Solution run() {
    Solution sol;
    const int N = n_ + p_ + m_;
    x_ = VectorXd::Zero(n_);
    y_ = VectorXd::Zero(p_);

    // Initial point: least-squares primal/dual candidates shifted into the cone.
    Scaling identity;
    if (!identity_scaling(identity)) return breakdown(sol);
    assemble_kkt(identity);
    lu_.compute(kkt_);
    {
      VectorXd rhs = VectorXd::Zero(N);
      rhs.segment(n_, p_) = b_;
      rhs.segment(n_ + p_, m_) = h_;
      VectorXd u = solve_refined(identity, rhs);
      x_ = u.head(n_);
      s_ = shift_interior(-u.tail(m_));
      rhs.setZero();
      rhs.head(n_) = -c_;
      u = solve_refined(identity, rhs);
      y_ = u.segment(n_, p_);
      z_ = shift_interior(u.tail(m_));
    }
    tau_ = 1.0;
    kappa_ = 1.0;

    int iter = 0;
    for (; iter <= st_.max_iters; ++iter) {
      // residuals of the homogeneous embedding
      VectorXd rx = A_.transpose() * y_ + G_.transpose() * z_ + c_ * tau_;
      VectorXd ry = -A_ * x_ + b_ * tau_;
      VectorXd rz = s_ + G_ * x_ - h_ * tau_;
      double rk = kappa_ + c_.dot(x_) + b_.dot(y_) + h_.dot(z_);
      double mu = (dot_sz() + tau_ * kappa_) / (nu_ + 1);
      if (!std::isfinite(mu)) return breakdown(sol);

      if (converged(sol, iter)) return sol;
      if (certificate(sol, iter)) return sol;
      if (iter == st_.max_iters) break;

      Scaling sc;
      if (!make_scaling(sc)) return breakdown(sol);
      assemble_kkt(sc);
      lu_.compute(kkt_);

      VectorXd rhs1 = VectorXd::Zero(N);
      rhs1.head(n_) = -c_;
      rhs1.segment(n_, p_) = b_;
      rhs1.segment(n_ + p_, m_) = h_;
      VectorXd u1 = solve_refined(sc, rhs1);
      double denom = -kappa_ / tau_ + c_.dot(u1.head(n_)) + b_.dot(u1.segment(n_, p_)) +
                     h_.dot(u1.tail(m_));
      if (denom == 0 || !std::isfinite(denom)) return breakdown(sol);

      auto direction = [&](const VectorXd& rs, double rkt, double resid_scale, VectorXd& dx,
                           VectorXd& dy, VectorXd& dz, VectorXd& ds, double& dtau,
                           double& dkappa) {
        VectorXd dv = arrow_solve(sc.lambda, rs);
        VectorXd rhs2 = VectorXd::Zero(N);
        rhs2.head(n_) = -resid_scale * rx;
        rhs2.segment(n_, p_) = resid_scale * ry;
        rhs2.tail(m_) = -resid_scale * rz - apply_w(sc, dv);
        VectorXd u2 = solve_refined(sc, rhs2);
        double num = -resid_scale * rk - rkt / tau_ -
                     (c_.dot(u2.head(n_)) + b_.dot(u2.segment(n_, p_)) + h_.dot(u2.tail(m_)));
        dtau = num / denom;
        dx = u2.head(n_) + dtau * u1.head(n_);
        dy = u2.segment(n_, p_) + dtau * u1.segment(n_, p_);
        dz = u2.tail(m_) + dtau * u1.tail(m_);
        ds = apply_w(sc, dv) - apply_w(sc, apply_w(sc, dz));
        dkappa = (rkt - kappa_ * dtau) / tau_;
      };

      // affine (predictor) direction
      VectorXd ll = jordan(sc.lambda, sc.lambda);
      VectorXd dxa, dya, dza, dsa;
      double dta, dka;
      direction(-ll, -tau_ * kappa_, 1.0, dxa, dya, dza, dsa, dta, dka);

      double alpha_aff = std::min({1.0, step_len(s_, dsa), step_len(z_, dza),
                                   pos_step(tau_, dta), pos_step(kappa_, dka)});
      double mu_aff = ((s_ + alpha_aff * dsa).dot(z_ + alpha_aff * dza) +
                       (tau_ + alpha_aff * dta) * (kappa_ + alpha_aff * dka)) /
                      (nu_ + 1);
      double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3.0);

      // combined (corrector) direction with Mehrotra second-order term
      VectorXd e = cone_identity();
      VectorXd corr = jordan(apply_winv(sc, dsa), apply_w(sc, dza));
      VectorXd rs = sigma * mu * e - ll - corr;
      double rkt = sigma * mu - tau_ * kappa_ - dta * dka;
      VectorXd dx, dy, dz, ds;
      double dt, dk;
      direction(rs, rkt, 1.0 - sigma, dx, dy, dz, ds, dt, dk);

      double alpha = 0.99 * std::min({1.0 / 0.99, step_len(s_, ds), step_len(z_, dz),
                                      pos_step(tau_, dt), pos_step(kappa_, dk)});
      if (!(alpha > 0) || !std::isfinite(alpha)) return breakdown(sol);

      x_ += alpha * dx;
      y_ += alpha * dy;
      z_ += alpha * dz;
      s_ += alpha * ds;
      tau_ += alpha * dt;
      kappa_ += alpha * dk;
    }

    fill_point(sol);
    sol.status = Status::MaxIters;
    sol.iterations = iter;
    return sol;
  }

 private:
  static double inf_norm(const MatrixXd& M) {
    return M.size() ? M.cwiseAbs().maxCoeff() : 0.0;
  }

  double dot_sz() const { return m_ ? s_.dot(z_) : 0.0; }

  Solution breakdown(Solution& sol) {
    fill_point(sol);
    sol.status = Status::NumericalBreakdown;
    return sol;
  }

  void fill_point(Solution& sol) {
    double t = tau_ > 0 ? tau_ : 1.0;
    sol.z = x_ / t;
    sol.y = y_ / t;
    sol.zc = z_ / t;
    sol.s = s_ / t;
  }

  bool converged(Solution& sol, int iter) {
    double t = tau_;
    if (!(t > 0)) return false;
    VectorXd xh = x_ / t, yh = y_ / t, zh = z_ / t, sh = s_ / t;
    double pres_eq = p_ ? (A_ * xh - b_).cwiseAbs().maxCoeff() / std::max(1.0, inf_vec(b_)) : 0.0;
    double pres_in = m_ ? (G_ * xh + sh - h_).cwiseAbs().maxCoeff() / std::max(1.0, inf_vec(h_)) : 0.0;
    double pres = std::max(pres_eq, pres_in);
    double dres = (A_.transpose() * yh + G_.transpose() * zh + c_).cwiseAbs().maxCoeff() /
                  std::max(1.0, inf_vec(c_));
    double pobj = c_.dot(xh);
    double dobj = -b_.dot(yh) - h_.dot(zh);
    double gap_abs = m_ ? sh.dot(zh) : 0.0;
    double relgap = gap_abs / std::max({1.0, std::abs(pobj), std::abs(dobj)});
    if (pres <= st_.tol && dres <= st_.tol && relgap <= st_.tol) {
      fill_point(sol);
      sol.status = Status::Optimal;
      sol.res_primal = pres;
      sol.res_dual = dres;
      sol.gap = relgap;
      sol.pobj = pobj;
      sol.dobj = dobj;
      sol.iterations = iter;
      return true;
    }
    return false;
  }

  bool certificate(Solution& sol, int iter) {
    // Infeasibility only shows as tau -> 0 with kappa bounded away from it.
    if (tau_ > 1e-8 * std::max(1.0, kappa_)) return false;
    double w = b_.dot(y_) + h_.dot(z_);
    if (w < 0) {
      double r = (A_.transpose() * y_ + G_.transpose() * z_).cwiseAbs().maxCoeff() / (-w);
      if (r <= st_.tol * data_scale_) {
        fill_point(sol);
        sol.status = Status::Infeasible;
        sol.iterations = iter;
        return true;
      }
    }
    double cx = c_.dot(x_);
    if (cx < 0) {
      double r1 = p_ ? (A_ * x_).cwiseAbs().maxCoeff() : 0.0;
      double r2 = m_ ? (G_ * x_ + s_).cwiseAbs().maxCoeff() : 0.0;
      if (std::max(r1, r2) <= st_.tol * data_scale_ * (-cx)) {
        fill_point(sol);
        sol.status = Status::Unbounded;
        sol.iterations = iter;
        return true;
      }
    }
    return false;
  }

  static double inf_vec(const VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

  static double pos_step(double v, double dv) {
    return dv < 0 ? -v / dv : std::numeric_limits<double>::infinity();
  }

  // --- cone algebra ------------------------------------------------------

  VectorXd cone_identity() const {
    VectorXd e = VectorXd::Zero(m_);
    int off = 0;
    for (const auto& blk : cones_) {
      if (blk.kind == ConeBlock::Kind::NonNeg)
        e.segment(off, blk.dim).setOnes();
      else
        e(off) = 1.0;
      off += blk.dim;
    }
    return e;
  }

  VectorXd shift_interior(const VectorXd& v) const {
    double margin = std::numeric_limits<double>::infinity();
    int off = 0;
    for (const auto& blk : cones_) {
      auto seg = v.segment(off, blk.dim);
      if (blk.kind == ConeBlock::Kind::NonNeg)
        margin = std::min(margin, seg.minCoeff());
      else
        margin = std::min(margin, seg(0) - (blk.dim > 1 ? seg.tail(blk.dim - 1).norm() : 0.0));
      off += blk.dim;
    }
    if (m_ == 0) return v;
    if (margin > 1e-8) return v;
    return v + (1.0 - margin) * cone_identity();
  }

  VectorXd jordan(const VectorXd& u, const VectorXd& v) const {
    VectorXd out(m_);
    int off = 0;
    for (const auto& blk : cones_) {
      auto us = u.segment(off, blk.dim);
      auto vs = v.segment(off, blk.dim);
      if (blk.kind == ConeBlock::Kind::NonNeg) {
        out.segment(off, blk.dim) = us.cwiseProduct(vs);
      } else {
        out(off) = us.dot(vs);
        if (blk.dim > 1)
          out.segment(off + 1, blk.dim - 1) =
              us(0) * vs.tail(blk.dim - 1) + vs(0) * us.tail(blk.dim - 1);
      }
      off += blk.dim;
    }
    return out;
  }

  // solve arrow(lam) u = r per block
  VectorXd arrow_solve(const VectorXd& lam, const VectorXd& r) const {
    VectorXd out(m_);
    int off = 0;
    for (const auto& blk : cones_) {
      auto ls = lam.segment(off, blk.dim);
      auto rs = r.segment(off, blk.dim);
      if (blk.kind == ConeBlock::Kind::NonNeg) {
        out.segment(off, blk.dim) = rs.cwiseQuotient(ls);
      } else {
        int d = blk.dim;
        double l0 = ls(0);
        if (d == 1) {
          out(off) = rs(0) / l0;
        } else {
          auto l1 = ls.tail(d - 1);
          auto r1 = rs.tail(d - 1);
          double det = l0 * l0 - l1.squaredNorm();
          double u0 = (l0 * rs(0) - l1.dot(r1)) / det;
          out(off) = u0;
          out.segment(off + 1, d - 1) = (r1 - u0 * l1) / l0;
        }
      }
      off += blk.dim;
    }
    return out;
  }

  double step_len(const VectorXd& v, const VectorXd& dv) const {
    double alpha = std::numeric_limits<double>::infinity();
    int off = 0;
    for (const auto& blk : cones_) {
      auto vs = v.segment(off, blk.dim);
      auto ds = dv.segment(off, blk.dim);
      if (blk.kind == ConeBlock::Kind::NonNeg) {
        for (int i = 0; i < blk.dim; ++i)
          if (ds(i) < 0) alpha = std::min(alpha, -vs(i) / ds(i));
      } else {
        int d = blk.dim;
        if (d == 1) {
          if (ds(0) < 0) alpha = std::min(alpha, -vs(0) / ds(0));
        } else {
          // largest t with (v0+t d0)^2 >= ||v1+t d1||^2 and v0+t d0 >= 0
          auto v1 = vs.tail(d - 1);
          auto d1 = ds.tail(d - 1);
          double a = ds(0) * ds(0) - d1.squaredNorm();
          double bq = vs(0) * ds(0) - v1.dot(d1);
          double cq = vs(0) * vs(0) - v1.squaredNorm();
          double t = std::numeric_limits<double>::infinity();
          if (std::abs(a) < 1e-300) {
            if (bq < 0) t = -cq / (2 * bq);
          } else {
            double disc = bq * bq - a * cq;
            if (a < 0) {
              // concave: exits the cone at the larger root
              double sq = std::sqrt(std::max(0.0, disc));
              t = (-bq - sq) / a;  // a<0: this is the positive exit root
            } else if (disc >= 0 && bq < 0) {
              double sq = std::sqrt(disc);
              t = cq / (-bq + sq);  // stable smaller positive root
            }
          }
          if (ds(0) < 0) t = std::min(t, -vs(0) / ds(0));
          if (t >= 0) alpha = std::min(alpha, t);
        }
      }
      off += blk.dim;
    }
    return alpha;
  }

  // --- NT scaling ---------------------------------------------------------

  bool identity_scaling(Scaling& sc) const {
    sc.blocks.clear();
    sc.lambda = cone_identity();
    for (const auto& blk : cones_) {
      Scaling::Block sb;
      if (blk.kind == ConeBlock::Kind::NonNeg) {
        sb.soc = false;
        sb.w = VectorXd::Ones(blk.dim);
      } else {
        sb.soc = true;
        sb.eta = 1.0;
        sb.wbar = VectorXd::Zero(blk.dim);
        sb.wbar(0) = 1.0;
      }
      sc.blocks.push_back(std::move(sb));
    }
    return true;
  }

  bool make_scaling(Scaling& sc) const {
    sc.blocks.clear();
    sc.lambda = VectorXd::Zero(m_);
    int off = 0;
    for (const auto& blk : cones_) {
      auto ss = s_.segment(off, blk.dim);
      auto zs = z_.segment(off, blk.dim);
      Scaling::Block sb;
      if (blk.kind == ConeBlock::Kind::NonNeg) {
        sb.soc = false;
        sb.w.resize(blk.dim);
        for (int i = 0; i < blk.dim; ++i) {
          if (!(ss(i) > 0) || !(zs(i) > 0)) return false;
          sb.w(i) = std::sqrt(ss(i) / zs(i));
          sc.lambda(off + i) = std::sqrt(ss(i) * zs(i));
        }
      } else {
        int d = blk.dim;
        double sres = ss(0) * ss(0) - (d > 1 ? ss.tail(d - 1).squaredNorm() : 0.0);
        double zres = zs(0) * zs(0) - (d > 1 ? zs.tail(d - 1).squaredNorm() : 0.0);
        if (!(sres > 0) || !(zres > 0) || !(ss(0) > 0) || !(zs(0) > 0)) return false;
        VectorXd sbar = ss / std::sqrt(sres);
        VectorXd zbar = zs / std::sqrt(zres);
        double gamma = std::sqrt((1.0 + sbar.dot(zbar)) / 2.0);
        VectorXd jz = zbar;
        if (d > 1) jz.tail(d - 1) = -zbar.tail(d - 1);
        sb.soc = true;
        sb.wbar = (sbar + jz) / (2.0 * gamma);
        sb.eta = std::pow(sres / zres, 0.25);
        // lambda = W z
        sc.lambda.segment(off, d) = apply_w_block(sb, zs);
      }
      sc.blocks.push_back(std::move(sb));
      off += blk.dim;
    }
    return true;
  }

  static VectorXd apply_w_block(const Scaling::Block& sb, const Eigen::Ref<const VectorXd>& v) {
    if (!sb.soc) return sb.w.cwiseProduct(v);
    int d = static_cast<int>(v.size());
    VectorXd out(d);
    if (d == 1) {
      out(0) = sb.eta * sb.wbar(0) * v(0);
      return out;
    }
    auto w1 = sb.wbar.tail(d - 1);
    double w0 = sb.wbar(0);
    double w1v = w1.dot(v.tail(d - 1));
    out(0) = sb.eta * (w0 * v(0) + w1v);
    out.tail(d - 1) = sb.eta * (v(0) * w1 + v.tail(d - 1) + (w1v / (1.0 + w0)) * w1);
    return out;
  }

  static VectorXd apply_winv_block(const Scaling::Block& sb, const Eigen::Ref<const VectorXd>& v) {
    if (!sb.soc) return v.cwiseQuotient(sb.w);
    int d = static_cast<int>(v.size());
    VectorXd out(d);
    if (d == 1) {
      out(0) = v(0) / (sb.eta * sb.wbar(0));
      return out;
    }
    auto w1 = sb.wbar.tail(d - 1);
    double w0 = sb.wbar(0);
    double w1v = w1.dot(v.tail(d - 1));
    out(0) = (w0 * v(0) - w1v) / sb.eta;
    out.tail(d - 1) = (-v(0) * w1 + v.tail(d - 1) + (w1v / (1.0 + w0)) * w1) / sb.eta;
    return out;
  }

  VectorXd apply_w(const Scaling& sc, const VectorXd& v) const {
    VectorXd out(m_);
    int off = 0;
    for (size_t k = 0; k < cones_.size(); ++k) {
      int d = cones_[k].dim;
      out.segment(off, d) = apply_w_block(sc.blocks[k], v.segment(off, d));
      off += d;
    }
    return out;
  }

  VectorXd apply_winv(const Scaling& sc, const VectorXd& v) const {
    VectorXd out(m_);
    int off = 0;
    for (size_t k = 0; k < cones_.size(); ++k) {
      int d = cones_[k].dim;
      out.segment(off, d) = apply_winv_block(sc.blocks[k], v.segment(off, d));
      off += d;
    }
    return out;
  }

  // --- KKT -----------------------------------------------------------------

  void assemble_kkt(const Scaling& sc) {
    const int N = n_ + p_ + m_;
    kkt_.setZero(N, N);
    if (p_) {
      kkt_.block(n_, 0, p_, n_) = A_;
      kkt_.block(0, n_, n_, p_) = A_.transpose();
    }
    if (m_) {
      kkt_.block(n_ + p_, 0, m_, n_) = G_;
      kkt_.block(0, n_ + p_, n_, m_) = G_.transpose();
      int off = 0;
      for (size_t k = 0; k < cones_.size(); ++k) {
        int d = cones_[k].dim;
        const auto& sb = sc.blocks[k];
        if (!sb.soc) {
          for (int i = 0; i < d; ++i)
            kkt_(n_ + p_ + off + i, n_ + p_ + off + i) = -sb.w(i) * sb.w(i);
        } else {
          // W^2 = eta^2 (2 wbar wbar' - J)
          Eigen::MatrixXd w2 = 2.0 * sb.wbar * sb.wbar.transpose();
          w2(0, 0) -= 1.0;
          for (int i = 1; i < d; ++i) w2(i, i) += 1.0;
          kkt_.block(n_ + p_ + off, n_ + p_ + off, d, d) = -sb.eta * sb.eta * w2;
        }
        off += d;
      }
    }
    // static regularization keeps the LU well posed; refinement removes its bias
    for (int i = 0; i < n_; ++i) kkt_(i, i) += kReg;
    for (int i = n_; i < N; ++i) kkt_(i, i) -= kReg;
  }

  VectorXd kkt_apply_exact(const Scaling& sc, const VectorXd& u) const {
    VectorXd out(n_ + p_ + m_);
    auto ux = u.head(n_);
    auto uy = u.segment(n_, p_);
    auto uz = u.tail(m_);
    out.head(n_) = A_.transpose() * uy + G_.transpose() * uz;
    out.segment(n_, p_) = A_ * ux;
    out.tail(m_) = G_ * ux - apply_w(sc, apply_w(sc, uz));
    return out;
  }

  VectorXd solve_refined(const Scaling& sc, const VectorXd& rhs) const {
    VectorXd u = lu_.solve(rhs);
    for (int k = 0; k < 2; ++k) {
      VectorXd r = rhs - kkt_apply_exact(sc, u);
      if (r.cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, rhs.cwiseAbs().maxCoeff())) break;
      u += lu_.solve(r);
    }
    return u;
  }

  static constexpr double kReg = 1e-10;

  VectorXd c_;
  MatrixXd A_;
  VectorXd b_;
  MatrixXd G_;
  VectorXd h_;
  std::vector<ConeBlock> cones_;
  Settings st_;
  int n_ = 0, p_ = 0, m_ = 0;
  double nu_ = 0;
  double data_scale_ = 1;

  VectorXd x_, y_, z_, s_;
  double tau_ = 1, kappa_ = 1;
  MatrixXd kkt_;
  Eigen::PartialPivLU<MatrixXd> lu_;
};

// Combined KKT error of a candidate primal/dual triple on the original data.
inline double kkt_error(const Problem& prob, const VectorXd& z, const VectorXd& y,
                        const VectorXd& zc) {
  VectorXd stat = prob.q;
  if (prob.P.size() > 0) stat += prob.P * z;
  if (prob.A.rows() > 0) stat += prob.A.transpose() * y;
  if (prob.G.rows() > 0) stat += prob.G.transpose() * zc;
  double err = stat.cwiseAbs().maxCoeff();
  if (prob.A.rows() > 0) err = std::max(err, (prob.A * z - prob.b).cwiseAbs().maxCoeff());
  if (prob.G.rows() > 0) {
    VectorXd s = prob.h - prob.G * z;
    err = std::max(err, std::abs(s.dot(zc)));
    int off = 0;
    for (const auto& blk : prob.cones) {
      auto seg = s.segment(off, blk.dim);
      if (blk.kind == ConeBlock::Kind::NonNeg)
        err = std::max(err, -seg.minCoeff());
      else
        err = std::max(err, (blk.dim > 1 ? seg.tail(blk.dim - 1).norm() : 0.0) - seg(0));
      off += blk.dim;
    }
  }
  return err;
}

// Newton refinement with the active set frozen at the interior-point answer.
// Smooth quadratic minima land within sqrt(gap) of the argmin under the IPM
// alone; two Newton steps on the active-set KKT system recover machine
// precision. The polished point is kept only when it beats the incumbent.
inline void polish(const Problem& prob, Solution& sol) {
  const int n = prob.n, p = prob.eq_rows(), m = prob.cone_rows();
  if (sol.z.size() != n) return;

  struct ActiveNn {
    int row;
  };
  struct ActiveSoc {
    int off, dim;
  };
  std::vector<ActiveNn> ann;
  std::vector<ActiveSoc> asoc;
  {
    int off = 0;
    for (const auto& blk : prob.cones) {
      if (blk.kind == ConeBlock::Kind::NonNeg) {
        for (int i = 0; i < blk.dim; ++i)
          if (sol.zc(off + i) > sol.s(off + i)) ann.push_back({off + i});
      } else {
        double ms = sol.s(off) -
                    (blk.dim > 1 ? sol.s.segment(off + 1, blk.dim - 1).norm() : 0.0);
        double mz = sol.zc(off) -
                    (blk.dim > 1 ? sol.zc.segment(off + 1, blk.dim - 1).norm() : 0.0);
        if (ms < mz && blk.dim > 1) asoc.push_back({off, blk.dim});
      }
      off += blk.dim;
    }
  }

  int na = static_cast<int>(ann.size());
  int ns = static_cast<int>(asoc.size());
  VectorXd z = sol.z;
  VectorXd y = sol.y;
  VectorXd lam_nn(na), nu(ns);
  for (int i = 0; i < na; ++i) lam_nn(i) = sol.zc(ann[i].row);
  for (int k = 0; k < ns; ++k) nu(k) = sol.zc(asoc[k].off);

  const int N = n + p + na + ns;
  for (int step = 0; step < 3; ++step) {
    VectorXd s = m ? VectorXd(prob.h - prob.G * z) : VectorXd();
    MatrixXd J = MatrixXd::Zero(N, N);
    VectorXd F = VectorXd::Zero(N);

    MatrixXd hess = prob.P.size() > 0 ? MatrixXd(0.5 * (prob.P + prob.P.transpose()))
                                      : MatrixXd(MatrixXd::Zero(n, n));
    VectorXd stat = prob.q;
    if (prob.P.size() > 0) stat += hess * z;
    if (p) stat += prob.A.transpose() * y;

    for (int i = 0; i < na; ++i) {
      // constraint c = h_i - G_i z = s_i = 0; dual enters stationarity as +G_i' zc
      stat += prob.G.row(ann[i].row).transpose() * lam_nn(i);
      J.block(0, n + p + i, n, 1) = prob.G.row(ann[i].row).transpose();
      J.block(n + p + i, 0, 1, n) = prob.G.row(ann[i].row);
      F(n + p + i) = prob.G.row(ann[i].row).dot(z) - prob.h(ann[i].row);
    }
    bool degenerate = false;
    for (int k = 0; k < ns; ++k) {
      int off = asoc[k].off, d = asoc[k].dim;
      VectorXd s1 = s.segment(off + 1, d - 1);
      double nrm = s1.norm();
      if (nrm < 1e-12) {
        degenerate = true;
        break;
      }
      VectorXd u = s1 / nrm;
      MatrixXd G1 = prob.G.block(off + 1, 0, d - 1, n);
      // zc block = nu * (1, -u); stationarity contribution G' zc
      VectorXd grad = prob.G.row(off).transpose() - G1.transpose() * u;
      stat += nu(k) * grad;
      // curvature of -nu*||s1|| wrt z: +nu/nrm * G1'(I - uu')G1
      MatrixXd proj = MatrixXd::Identity(d - 1, d - 1) - u * u.transpose();
      hess += (nu(k) / nrm) * (G1.transpose() * proj * G1);
      J.block(0, n + p + na + k, n, 1) = grad;
      J.block(n + p + na + k, 0, 1, n) = grad.transpose();
      F(n + p + na + k) = -(s(off) - nrm);
    }
    if (degenerate) return;

    J.block(0, 0, n, n) = hess;
    if (p) {
      J.block(0, n, n, p) = prob.A.transpose();
      J.block(n, 0, p, n) = prob.A;
      F.segment(n, p) = prob.A * z - prob.b;
    }
    F.head(n) = stat;
    for (int i = 0; i < n; ++i) J(i, i) += 1e-13;
    for (int i = n; i < N; ++i) J(i, i) -= 1e-13;

    Eigen::PartialPivLU<MatrixXd> lu(J);
    VectorXd dlt = lu.solve(-F);
    if (!dlt.allFinite()) return;
    z += dlt.head(n);
    if (p) y += dlt.segment(n, p);
    lam_nn += dlt.segment(n + p, na);
    nu += dlt.tail(ns);
  }

  // rebuild duals and accept only on strict KKT improvement
  VectorXd zc = VectorXd::Zero(m);
  for (int i = 0; i < na; ++i) zc(ann[i].row) = lam_nn(i);
  VectorXd s = m ? VectorXd(prob.h - prob.G * z) : VectorXd();
  for (int k = 0; k < ns; ++k) {
    int off = asoc[k].off, d = asoc[k].dim;
    VectorXd s1 = s.segment(off + 1, d - 1);
    double nrm = s1.norm();
    if (nrm < 1e-12) return;
    zc(off) = nu(k);
    zc.segment(off + 1, d - 1) = -nu(k) * s1 / nrm;
  }
  if (lam_nn.size() && lam_nn.minCoeff() < -1e-9) return;
  if (nu.size() && nu.minCoeff() < -1e-9) return;

  double err_old = kkt_error(prob, sol.z, sol.y, sol.zc);
  double err_new = kkt_error(prob, z, y, zc);
  if (!(err_new < err_old)) return;

  // refresh the reported residuals from the polished point
  double hb = std::max(1.0, p ? prob.b.cwiseAbs().maxCoeff() : 0.0);
  double hh = std::max(1.0, m ? prob.h.cwiseAbs().maxCoeff() : 0.0);
  double pres = p ? (prob.A * z - prob.b).cwiseAbs().maxCoeff() / hb : 0.0;
  {
    int off = 0;
    for (const auto& blk : prob.cones) {
      auto seg = s.segment(off, blk.dim);
      double viol = blk.kind == ConeBlock::Kind::NonNeg
                        ? -seg.minCoeff()
                        : (blk.dim > 1 ? seg.tail(blk.dim - 1).norm() : 0.0) - seg(0);
      pres = std::max(pres, viol / hh);
      off += blk.dim;
    }
  }
  VectorXd stat = prob.q;
  if (prob.P.size() > 0) stat += 0.5 * (prob.P + prob.P.transpose()) * z;
  if (p) stat += prob.A.transpose() * y;
  if (m) stat += prob.G.transpose() * zc;
  double dres = stat.cwiseAbs().maxCoeff() / std::max(1.0, prob.q.cwiseAbs().maxCoeff());
  double pobj = prob.objective(z);
  double gap = m ? std::abs(s.dot(zc)) / std::max(1.0, std::abs(pobj)) : 0.0;
  if (pres > sol.res_primal && pres > 1e-9) return;
  if (dres > sol.res_dual && dres > 1e-9) return;

  sol.z = z;
  sol.y = y;
  sol.zc = zc;
  sol.s = s;
  sol.res_primal = pres;
  sol.res_dual = dres;
  sol.gap = gap;
  sol.objective = pobj;
}

}  // namespace detail

// Solves the conic QP. A nonzero P is folded into an epigraph second-order
// cone via its eigenfactorization, so the core always runs on a linear
// objective.
inline Solution solve(const Problem& prob, Settings st = {}) {
  prob.check();

  if (!prob.has_quadratic()) {
    detail::Hsde core(prob.q, prob.A, prob.b, prob.G, prob.h, prob.cones, st);
    Solution sol = core.run();
    if (sol.z.size() == prob.n) sol.objective = prob.objective(sol.z);
    if (sol.status == Status::Optimal && st.polish) detail::polish(prob, sol);
    return sol;
  }

  Eigen::MatrixXd sym = 0.5 * (prob.P + prob.P.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  double lmax = es.eigenvalues().maxCoeff();
  double rank_tol = 1e-12 * std::max(1.0, lmax);
  std::vector<int> keep;
  for (int i = 0; i < prob.n; ++i)
    if (es.eigenvalues()(i) > rank_tol) keep.push_back(i);
  int r = static_cast<int>(keep.size());

  Eigen::MatrixXd W(r, prob.n);
  for (int k = 0; k < r; ++k)
    W.row(k) = std::sqrt(es.eigenvalues()(keep[k])) * es.eigenvectors().col(keep[k]).transpose();

  int n2 = prob.n + 1;  // extra epigraph variable t >= 0.5 z'Pz
  int m = prob.cone_rows();
  Eigen::VectorXd c2(n2);
  c2 << prob.q, 1.0;
  Eigen::MatrixXd A2(prob.eq_rows(), n2);
  if (prob.eq_rows()) A2 << prob.A, Eigen::VectorXd::Zero(prob.eq_rows());
  Eigen::MatrixXd G2 = Eigen::MatrixXd::Zero(m + r + 2, n2);
  Eigen::VectorXd h2(m + r + 2);
  G2.block(0, 0, m, prob.n) = prob.G;
  h2.head(m) = prob.h;
  G2(m, prob.n) = -1.0;      // s0 = t + 1
  G2(m + 1, prob.n) = -1.0;  // s1 = t - 1
  G2.block(m + 2, 0, r, prob.n) = -std::sqrt(2.0) * W;
  h2(m) = 1.0;
  h2(m + 1) = -1.0;
  h2.tail(r).setZero();
  auto cones2 = prob.cones;
  cones2.push_back({ConeBlock::Kind::Soc, r + 2});

  detail::Hsde core(c2, A2, prob.b, G2, h2, cones2, st);
  Solution sol = core.run();
  if (sol.z.size() == n2) {
    sol.z.conservativeResize(prob.n);
    sol.s.conservativeResize(m);
    sol.zc.conservativeResize(m);
    sol.objective = prob.objective(sol.z);
    if (sol.status == Status::Optimal && st.polish) detail::polish(prob, sol);
  }
  return sol;
}

}  // namespace dopf::conic
