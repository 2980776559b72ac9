#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "rslq/time_grid.hpp"

namespace rslq {

// Time-gridded per-regime matrix tables produced by the backward solvers.
// value[j][i] is the matrix at node j for regime i+1. deriv holds the
// right-hand side at each node; residual checks and diagnostics use it.
struct RiccatiSolution {
  enum class Kind { follower_p, leader_sigma, lambda_p };

  Kind kind = Kind::follower_p;
  TimeGrid grid;
  std::vector<std::vector<Eigen::MatrixXd>> value;
  std::vector<std::vector<Eigen::MatrixXd>> deriv;

  struct Meta {
    int method_order = 4;
    double step = 0.0;
    int steps_used = 0;
    double max_ode_residual = 0.0;
    double max_symmetry_defect = 0.0;
    // strong-regularity margins observed along the solve
    double min_r1hat_eig = std::numeric_limits<double>::infinity();
    double min_t22_eig = std::numeric_limits<double>::infinity();
    double max_that_condition = 0.0;
    double min_p_eig = std::numeric_limits<double>::infinity();
    double lambda = 0.0;  // lambda_p only
  } meta;

  int num_regimes() const {
    return value.empty() ? 0 : static_cast<int>(value[0].size());
  }
  const Eigen::MatrixXd& at_node(int j, int regime) const {
    return value[j][regime - 1];
  }
  // Value at an exact grid node (throws if s is not a node).
  const Eigen::MatrixXd& at_time(double s, int regime,
                                 double tol = 1e-9) const {
    return value[grid.node_index(s, tol)][regime - 1];
  }
  // Linear interpolation between nodes; used by path evaluators when an
  // off-grid time is requested.
  Eigen::MatrixXd eval(double s, int regime) const {
    const int c = grid.cell_of(s);
    const double w = (s - grid.node(c)) / grid.step;
    return (1.0 - w) * value[c][regime - 1] + w * value[c + 1][regime - 1];
  }
};

}  // namespace rslq
