#pragma once

#include <Eigen/Core>
#include <memory>
#include <vector>

#include "rslq/problem.hpp"
#include "rslq/solution.hpp"

namespace rslq {

// Follower-side derived coefficients at one (time, regime) point.
struct HatEval {
  Eigen::MatrixXd S1hat;      // m1 x n
  Eigen::MatrixXd R1hat;      // m1 x m1, symmetric positive definite
  Eigen::MatrixXd R1hat_inv;  // m1 x m1
  Eigen::MatrixXd Xi;         // m1 x m2
  Eigen::MatrixXd Ahat;       // n x n
  Eigen::MatrixXd Chat;       // n x n
  Eigen::MatrixXd Hhat;       // n x m2
  Eigen::VectorXd fhat;       // n
  double r1hat_min_eig = 0.0;
};

// Leader-side reduced cost block at one (time, regime) point.
struct LeaderEval {
  Eigen::MatrixXd G, S1, S2, T11, T12, T21, T22, T22_inv;
  Eigen::VectorXd q, rho1, rho2;
  double t22_min_eig = 0.0;
};

struct TildeEval {
  Eigen::MatrixXd Ftilde;    // n x n
  Eigen::MatrixXd S1tilde;   // n x n
  Eigen::MatrixXd T11tilde;  // n x n, symmetric
  Eigen::VectorXd rho1tilde; // n
};

// Scalar rewrite of the leader equation for one-dimensional states, plus the
// two-control block embedding. calR1 follows the convention in which the
// quadratic Sigma-term of the rewritten equation reads Sigma*calR1^{-1}*Sigma
// (so calR1 = (G - T11tilde^{-1} S1tilde^2 - S2' T22^{-1} S2)^{-1}).
struct OneDimEval {
  double calA = 0, calB = 0, calD = 0, calS = 0;
  double calQ = 0, calR1 = 0, calR2 = 0;
  Eigen::MatrixXd bbB;  // 1 x 2 : [1, calB]
  Eigen::MatrixXd bbD;  // 1 x 2 : [0, calD]
  Eigen::MatrixXd bbS;  // 2 x 1 : [0; calS]
  Eigen::MatrixXd bbR;  // 2 x 2 : diag(calR1, calR2)
};

// Evaluation engine for all derived coefficient blocks. A primal instance
// recomputes blocks from the raw coefficients and the follower solution P at
// the exact requested time (P must hold that time as a grid node); a reduced
// instance reads the blocks straight from the problem tables.
class DerivedBlocks {
 public:
  static std::shared_ptr<const DerivedBlocks> from_problem(
      std::shared_ptr<const ProblemData> p,
      std::shared_ptr<const RiccatiSolution> P, double cond_ceiling = 1e12);
  static std::shared_ptr<const DerivedBlocks> from_reduced(
      std::shared_ptr<const ProblemData> p, double cond_ceiling = 1e12);

  // `s` locates continuous quantities (the follower solution P); `piece_time`
  // selects the piecewise-constant coefficient piece and defaults to s. The
  // integrators pass the enclosing cell's midpoint so that stage evaluations
  // at cell boundaries read the correct piece.
  HatEval hat(double s, int regime) const { return hat(s, s, regime); }
  HatEval hat(double s, double piece_time, int regime) const;
  LeaderEval leader(double s, int regime) const { return leader(s, s, regime); }
  LeaderEval leader(double s, double piece_time, int regime) const;
  LeaderEval leader(double s, double piece_time, int regime,
                    const HatEval& hat) const;
  TildeEval tilde(double s, int regime) const { return tilde(s, s, regime); }
  TildeEval tilde(double s, double piece_time, int regime) const;
  OneDimEval one_dim(double s, int regime) const {
    return one_dim(s, s, regime);
  }
  OneDimEval one_dim(double s, double piece_time, int regime) const;

  struct All {
    HatEval hat;
    LeaderEval leader;
    TildeEval tilde;
  };
  All all(double s, int regime) const { return all(s, s, regime); }
  All all(double s, double piece_time, int regime) const;

  const ProblemData& problem() const { return *problem_; }
  std::shared_ptr<const ProblemData> problem_ptr() const { return problem_; }
  const RiccatiSolution* follower_p() const { return P_.get(); }
  bool reduced() const { return problem_->is_reduced(); }
  int num_regimes() const { return problem_->num_regimes; }
  double horizon() const { return problem_->horizon; }
  double cond_ceiling() const { return cond_ceiling_; }

 private:
  DerivedBlocks() = default;
  static TildeEval tilde_impl(const HatEval& h, const LeaderEval& lb);
  All all_uncached(double s, double piece_time, int regime) const;
  std::shared_ptr<const ProblemData> problem_;
  std::shared_ptr<const RiccatiSolution> P_;
  double cond_ceiling_ = 1e12;
  // Reduced coefficients are piecewise constant in time, so every block is
  // precomputed per (piece, regime) at construction.
  std::vector<double> piece_starts_;
  std::vector<std::vector<All>> piece_cache_;  // [piece][regime]
};

// Quantities entering the leader equation for a given Sigma value.
struct SigmaOps {
  Eigen::MatrixXd That;      // I + Sigma*T11tilde
  Eigen::MatrixXd That_inv;
  Eigen::MatrixXd Fhat;      // Ftilde + Sigma*S1tilde'
  Eigen::MatrixXd Hhat;      // Hhat + Sigma*S2'
  double that_condition = 0.0;
};
SigmaOps sigma_ops(const Eigen::MatrixXd& Sigma, const TildeEval& tilde,
                   const LeaderEval& leader, const HatEval& hat,
                   double cond_ceiling, double s, int regime);

// Materialized node tables. All views created from one pipeline share the
// same evaluation source.
struct FollowerHatBlock {
  TimeGrid grid;
  std::vector<std::vector<HatEval>> at;  // [node][regime]
  double min_r1hat_eig = 0.0;
  std::shared_ptr<const DerivedBlocks> source;
};
struct LeaderBlock {
  TimeGrid grid;
  std::vector<std::vector<LeaderEval>> at;
  double min_t22_eig = 0.0;
  std::shared_ptr<const DerivedBlocks> source;
};
struct TildeBlock {
  TimeGrid grid;
  std::vector<std::vector<TildeEval>> at;
  std::shared_ptr<const DerivedBlocks> source;
};
struct OneDimBlock {
  TimeGrid grid;
  std::vector<std::vector<OneDimEval>> at;
  std::shared_ptr<const DerivedBlocks> source;
};

FollowerHatBlock follower_hat(std::shared_ptr<const ProblemData> p,
                              std::shared_ptr<const RiccatiSolution> P,
                              double cond_ceiling = 1e12);
LeaderBlock leader_block(const FollowerHatBlock& hat);
TildeBlock tilde_block(const LeaderBlock& lb);
OneDimBlock one_dim_rewrite(const TildeBlock& tb);

// Blocks for a reduced problem, materialized on a fresh grid.
struct ReducedBlockSet {
  FollowerHatBlock hat;
  LeaderBlock leader;
  TildeBlock tilde;
};
ReducedBlockSet reduced_blocks(std::shared_ptr<const ProblemData> p, int steps,
                               double cond_ceiling = 1e12);

}  // namespace rslq
