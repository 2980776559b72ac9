#pragma once

#include <Eigen/Core>
#include <memory>
#include <span>
#include <vector>

#include "rslq/backward.hpp"
#include "rslq/blocks.hpp"
#include "rslq/problem.hpp"
#include "rslq/regime_path.hpp"
#include "rslq/solution.hpp"

namespace rslq {

// Affine evaluators tabulated on the simulation grid. At node j, regime i,
// the equilibrium quantities are affine in phi*:
//   u2 = u2A phi* + u2b,  Y = yA phi* + yb,  Z = zA phi* + zb,  etc.
// Coefficient pieces at a node follow the cell to its right (last cell at
// the terminal node).
struct PolicyNode {
  Eigen::MatrixXd u2A, upsA, yA, zA, phi_driftA, phi_diffA;
  Eigen::VectorXd u2b, upsb, yb, zb, phi_driftb, phi_diffb;
  // follower feedback pieces (primal problems)
  Eigen::MatrixXd u1Kx, u1Ku2, u1Ky, u1Kz;
  Eigen::VectorXd u1k0;
  // raw dynamics and running cost (primal problems)
  Eigen::MatrixXd A, B1, B2, C, D1, D2, Q, R1, R2;
  Eigen::VectorXd bvec, sig;
  // reduced-cost block and stationarity pieces
  Eigen::MatrixXd G, S1, S2, T11, T12, T21, T22, HhatT;
  Eigen::VectorXd q, rho1, rho2;
};

struct PolicyTables {
  TimeGrid grid;
  std::vector<std::vector<PolicyNode>> node;  // [node][regime]
  std::vector<Eigen::MatrixXd> M;             // terminal weight per regime
  std::vector<Eigen::VectorXd> m_term;        // terminal linear term
};

// The synthesized Stackelberg equilibrium: both Riccati solutions, the
// decoupling table phi, and affine evaluators for every equilibrium
// quantity. Immutable after build; safe to share across simulation workers.
class EquilibriumPolicy {
 public:
  struct BuildOptions {
    int steps = 0;  // 0: use the problem's grid_steps
    double cond_ceiling = 1e12;
  };

  static EquilibriumPolicy build(std::shared_ptr<const ProblemData> p,
                                 BuildOptions opts);
  static EquilibriumPolicy build(std::shared_ptr<const ProblemData> p) {
    return build(std::move(p), BuildOptions{});
  }

  const ProblemData& problem() const { return *problem_; }
  std::shared_ptr<const ProblemData> problem_ptr() const { return problem_; }
  const TimeGrid& grid() const { return tables_.grid; }
  const RiccatiSolution& sigma() const { return *sigma_; }
  std::shared_ptr<const RiccatiSolution> sigma_ptr() const { return sigma_; }
  const RiccatiSolution* follower_p() const { return P_.get(); }
  std::shared_ptr<const RiccatiSolution> follower_p_ptr() const { return P_; }
  const BackwardTable& phi() const { return phi_; }
  const PolicyTables& tables() const { return tables_; }
  std::shared_ptr<const DerivedBlocks> source() const { return source_; }

  Eigen::VectorXd u2_star(double s, int regime,
                          const Eigen::VectorXd& phi_star) const;
  Eigen::VectorXd upsilon_star(double s, int regime,
                               const Eigen::VectorXd& phi_star) const;
  struct YZ {
    Eigen::VectorXd Y, Z;
  };
  YZ reconstruct_yz(double s, int regime,
                    const Eigen::VectorXd& phi_star) const;
  // Jump component of the reconstructed adjoint:
  //   -[Sigma(s,k) - Sigma(s,i-)] phi* + [phi(s,k) - phi(s,i-)].
  Eigen::VectorXd gamma_jump(double s, int k, int regime_before,
                             const Eigen::VectorXd& phi_star) const;
  Eigen::VectorXd u1_star(double s, int regime, const Eigen::VectorXd& X,
                          const Eigen::VectorXd& u2, const Eigen::VectorXd& Y,
                          const Eigen::VectorXd& Z) const;

  // True when the phi* equation has vanishing diffusion and a
  // regime-independent drift, making phi* (and the equilibrium controls as
  // regime-indexed functions) deterministic.
  bool phi_star_deterministic(double tol = 1e-12) const;
  // RK4 reference for the deterministic case, one value per grid node.
  std::vector<Eigen::VectorXd> phi_star_deterministic_path(
      const Eigen::VectorXd& x) const;

  // Euler-Maruyama simulation of phi* along a given chain path and Brownian
  // increments (one increment per grid cell). phi*(0) = -x.
  std::vector<Eigen::VectorXd> simulate_phi_star(
      const RegimePath& path, std::span<const double> dW,
      const Eigen::VectorXd& x) const;

  // alpha(s_j-) at every grid node.
  std::vector<int> node_regimes(const RegimePath& path) const;

 private:
  std::shared_ptr<const ProblemData> problem_;
  std::shared_ptr<const RiccatiSolution> P_;
  std::shared_ptr<const RiccatiSolution> sigma_;
  std::shared_ptr<const DerivedBlocks> source_;
  BackwardTable phi_;
  PolicyTables tables_;

  const PolicyNode& node_at(int j, int regime) const {
    return tables_.node[j][regime - 1];
  }
  // Linear interpolation weights for off-node evaluation.
  void locate(double s, int& cell, double& w) const;
};

}  // namespace rslq
