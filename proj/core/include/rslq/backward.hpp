#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <vector>

#include "rslq/blocks.hpp"
#include "rslq/generator.hpp"
#include "rslq/solution.hpp"

namespace rslq {

// Deterministic regime-indexed reduction of a linear BSDE: the adapted
// solution is value(s, alpha(s)), the Brownian integrand is identically zero
// and the jump integrand is the difference of regime values. Uniqueness of
// adapted solutions makes this candidate the solution whenever terminal data
// and forcing are deterministic and regime-indexed.
struct BackwardTable {
  TimeGrid grid;
  std::vector<std::vector<Eigen::VectorXd>> value;  // [node][regime]
  std::vector<std::vector<Eigen::VectorXd>> deriv;
  bool theta_zero = true;

  int num_regimes() const {
    return value.empty() ? 0 : static_cast<int>(value[0].size());
  }
  const Eigen::VectorXd& at_node(int j, int regime) const {
    return value[j][regime - 1];
  }
  const Eigen::VectorXd& at_time(double s, int regime,
                                 double tol = 1e-9) const {
    return value[grid.node_index(s, tol)][regime - 1];
  }
  Eigen::VectorXd eval(double s, int regime) const {
    const int c = grid.cell_of(s);
    const double w = (s - grid.node(c)) / grid.step;
    return (1.0 - w) * value[c][regime - 1] + w * value[c + 1][regime - 1];
  }
  // dN_k integrand along a path: value(s,k) - value(s, regime_before).
  Eigen::VectorXd jump_component(double s, int k, int regime_before) const {
    return eval(s, k) - eval(s, regime_before);
  }
};

// Deterministic regime-indexed control u(s, regime).
using RegimeControl = std::function<Eigen::VectorXd(double, int)>;

RegimeControl zero_control(int dim);
// Piecewise-constant control from per-cell values, values[cell][regime-1].
RegimeControl cell_control(const TimeGrid& grid,
                           std::vector<std::vector<Eigen::VectorXd>> values);

// Backward integration of the coupled linear system for the decoupling
// function phi(s, i): the drift of the phi-BSDE at regime i with a zero
// Brownian integrand, minus the rate-weighted coupling sum. Terminal data is
// one vector per regime. Sigma must be tabulated at twice this resolution.
BackwardTable solve_phi_bsde(const TildeBlock& tb, const LeaderBlock& lb,
                             const FollowerHatBlock& hat,
                             const RiccatiSolution& Sigma, const Generator& g,
                             const std::vector<Eigen::VectorXd>& terminal,
                             int steps);

struct FollowerReaction {
  BackwardTable y;  // adjoint table Y(s, i); the Brownian integrand is zero
  std::shared_ptr<const DerivedBlocks> source;

  // Feedback map of the rational reaction:
  //   u1 = -R1hat^{-1} [ S1hat X + Xi u2 + B1' Y + D1' Z + D1' P sigma ].
  Eigen::VectorXd feedback(double s, int regime, const Eigen::VectorXd& X,
                           const Eigen::VectorXd& u2, const Eigen::VectorXd& Y,
                           const Eigen::VectorXd& Z) const;
};

// Solves the announced-control adjoint equation for a deterministic
// regime-indexed u2 and exposes the feedback map. With include_inhomogeneous
// false the terminal data and the forcing fhat are dropped, which yields the
// linear part of the reaction used by perturbation probes.
FollowerReaction follower_reaction(const FollowerHatBlock& hat,
                                   const RegimeControl& u2, int steps,
                                   bool include_inhomogeneous = true);

}  // namespace rslq
