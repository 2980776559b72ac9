#pragma once

#include <Eigen/Dense>
#include <string>

#include "rslq/errors.hpp"

namespace rslq {

struct SpdInverse {
  Eigen::MatrixXd inverse;
  double min_eig = 0.0;
  double max_eig = 0.0;
};

// Inverse of a symmetric positive definite matrix through its
// eigendecomposition, with an explicit margin and condition ceiling. The
// formulas this library evaluates all presuppose uniform invertibility, so a
// failed check is an error rather than a warning.
inline SpdInverse spd_inverse(const Eigen::MatrixXd& m, double cond_ceiling,
                              const std::string& what, double s, int regime) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success)
    throw RegularityError(what + ": eigensolver failed", s, regime);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0.0)
    throw RegularityError(
        what + " not positive definite (min eigenvalue " + std::to_string(lo) +
            ")",
        s, regime);
  if (hi / lo > cond_ceiling)
    throw RegularityError(what + " condition number " +
                              std::to_string(hi / lo) + " exceeds ceiling",
                          s, regime);
  SpdInverse out;
  out.inverse = es.eigenvectors() *
                es.eigenvalues().cwiseInverse().asDiagonal() *
                es.eigenvectors().transpose();
  out.min_eig = lo;
  out.max_eig = hi;
  return out;
}

struct GeneralInverse {
  Eigen::MatrixXd inverse;
  double condition = 0.0;  // infinity-norm condition estimate
};

inline GeneralInverse general_inverse(const Eigen::MatrixXd& m,
                                      double cond_ceiling,
                                      const std::string& what, double s,
                                      int regime) {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  GeneralInverse out;
  out.inverse = lu.inverse();
  if (!out.inverse.allFinite())
    throw RegularityError(what + " singular", s, regime);
  const double nm = m.cwiseAbs().rowwise().sum().maxCoeff();
  const double ninv = out.inverse.cwiseAbs().rowwise().sum().maxCoeff();
  out.condition = nm * ninv;
  if (out.condition > cond_ceiling)
    throw RegularityError(what + " condition number " +
                              std::to_string(out.condition) +
                              " exceeds ceiling",
                          s, regime);
  return out;
}

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      0.5 * (m + m.transpose()));
  return es.eigenvalues().minCoeff();
}

inline void symmetrize(Eigen::MatrixXd& m) {
  m = (0.5 * (m + m.transpose())).eval();
}

}  // namespace rslq
