#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <ostream>
#include <string>
#include <vector>

#include "dopf/errors.hpp"

namespace dopf::conic {

// Cone K = product of a nonnegative orthant and second-order cones, in the
// order listed. Block dims must sum to rows(G).
struct ConeBlock {
  enum class Kind { NonNeg, Soc };
  Kind kind;
  int dim;
};

// minimize 0.5 z'Pz + q'z  s.t.  Az = b,  Gz + s = h,  s in K
struct Problem {
  int n = 0;
  Eigen::MatrixXd P;  // n x n (or 0 x 0 when absent)
  Eigen::VectorXd q;
  Eigen::MatrixXd A;  // p x n
  Eigen::VectorXd b;
  Eigen::MatrixXd G;  // m x n
  Eigen::VectorXd h;
  std::vector<ConeBlock> cones;

  int eq_rows() const { return static_cast<int>(A.rows()); }
  int cone_rows() const { return static_cast<int>(G.rows()); }

  bool has_quadratic() const { return P.size() > 0 && P.cwiseAbs().maxCoeff() > 0; }

  void check() const {
    if (q.size() != n) throw Error(Err::DimensionMismatch, "q size");
    if (P.size() > 0 && (P.rows() != n || P.cols() != n))
      throw Error(Err::DimensionMismatch, "P shape");
    if (A.size() > 0 && A.cols() != n) throw Error(Err::DimensionMismatch, "A cols");
    if (A.rows() != b.size()) throw Error(Err::DimensionMismatch, "A/b rows");
    if (G.size() > 0 && G.cols() != n) throw Error(Err::DimensionMismatch, "G cols");
    if (G.rows() != h.size()) throw Error(Err::DimensionMismatch, "G/h rows");
    int total = 0;
    for (const auto& c : cones) {
      if (c.dim <= 0) throw Error(Err::DimensionMismatch, "cone block dim");
      total += c.dim;
    }
    if (total != G.rows()) throw Error(Err::DimensionMismatch, "cone dims vs G rows");
    if (has_quadratic()) {
      Eigen::MatrixXd sym = 0.5 * (P + P.transpose());
      if ((P - sym).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, P.cwiseAbs().maxCoeff()))
        throw Error(Err::ConfigValidation, "P is not symmetric");
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-9)
        throw Error(Err::ConfigValidation, "P is not positive semidefinite");
    }
  }

  double objective(const Eigen::VectorXd& z) const {
    double v = q.dot(z);
    if (P.size() > 0) v += 0.5 * z.dot(P * z);
    return v;
  }
};

struct ValidationReport {
  double eq_residual = 0;               // ||Az - b||_inf
  std::vector<double> cone_violation;   // per block, 0 when inside
  double objective = 0;
};

// Feasibility audit of a candidate point against the raw problem data.
inline ValidationReport validate(const Problem& prob, const Eigen::VectorXd& z) {
  if (z.size() != prob.n) throw Error(Err::DimensionMismatch, "candidate size");
  ValidationReport rep;
  if (prob.A.rows() > 0) rep.eq_residual = (prob.A * z - prob.b).cwiseAbs().maxCoeff();
  Eigen::VectorXd s = prob.h - prob.G * z;
  int off = 0;
  for (const auto& blk : prob.cones) {
    auto seg = s.segment(off, blk.dim);
    double viol = 0;
    if (blk.kind == ConeBlock::Kind::NonNeg) {
      viol = std::max(0.0, -seg.minCoeff());
    } else {
      double tail = blk.dim > 1 ? seg.tail(blk.dim - 1).norm() : 0.0;
      viol = std::max(0.0, tail - seg(0));
    }
    rep.cone_violation.push_back(viol);
    off += blk.dim;
  }
  rep.objective = prob.objective(z);
  return rep;
}

// Plain-text dump for debugging: dims, cone layout, then coordinate triplets
// per matrix (matrix-market style).
inline void dump(const Problem& prob, std::ostream& os) {
  os << "%%conic-problem\n";
  os << "dims " << prob.n << " " << prob.eq_rows() << " " << prob.cone_rows() << "\n";
  os << "cones";
  for (const auto& c : prob.cones)
    os << " " << (c.kind == ConeBlock::Kind::NonNeg ? "nonneg" : "soc") << ":" << c.dim;
  os << "\n";
  auto mat = [&os](const char* name, const Eigen::MatrixXd& M) {
    os << name << "\n";
    for (int i = 0; i < M.rows(); ++i)
      for (int j = 0; j < M.cols(); ++j)
        if (M(i, j) != 0) os << i << " " << j << " " << M(i, j) << "\n";
    os << "end\n";
  };
  auto vec = [&os](const char* name, const Eigen::VectorXd& v) {
    os << name << "\n";
    for (int i = 0; i < v.size(); ++i)
      if (v(i) != 0) os << i << " " << v(i) << "\n";
    os << "end\n";
  };
  if (prob.P.size() > 0) mat("P", prob.P);
  vec("q", prob.q);
  mat("A", prob.A);
  vec("b", prob.b);
  mat("G", prob.G);
  vec("h", prob.h);
}

}  // namespace dopf::conic
