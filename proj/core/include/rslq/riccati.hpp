#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rslq/blocks.hpp"
#include "rslq/problem.hpp"
#include "rslq/solution.hpp"

namespace rslq {

// Backward RK4 integration of the follower system from P(T,i) = M(T,i).
// Strong regularity of R1hat is checked at every accepted node; losing it
// raises RegularityError (evidence that the uniform convexity assumption
// fails for the given data).
RiccatiSolution solve_follower_cdre(std::shared_ptr<const ProblemData> p,
                                    int steps, double cond_ceiling = 1e12);

// Backward RK4 integration of the leader system from Sigma(T,i) = 0. The
// blocks must share one evaluation source; for primal sources the follower
// solution must be tabulated at twice this solver's resolution so that RK4
// stage times evaluate exactly.
RiccatiSolution solve_leader_cdre(const TildeBlock& tb, const LeaderBlock& lb,
                                  const FollowerHatBlock& hat,
                                  const Generator& g, int steps);

// Backward RK4 integration of the lambda-terminal family from P(T,i) =
// lambda*I, including the full rate-weighted P P_k^{-1} P coupling (the k=i
// term stays inside the sum). The step count is refined to resolve the
// terminal layer of width ~1/lambda; positive definiteness of P is monitored
// at every node and failure is reported as a legitimate outcome.
RiccatiSolution solve_lambda_cdre(const TildeBlock& tb, const LeaderBlock& lb,
                                  const FollowerHatBlock& hat,
                                  const Generator& g, double lambda,
                                  int steps);

struct LambdaStudyRow {
  double lambda = 0.0;
  int steps_used = 0;
  bool solved = false;
  std::string error;
  double sup_gap = 0.0;            // sup-norm of P^{-1} - Sigma over the grid
  bool monotone_vs_prev = true;    // P_lambda2 >= P_lambda1 - 1e-8
  bool inverse_monotone_vs_prev = true;
  double min_monotone_margin = 0.0;
};

// Solves the lambda family for each value in ascending order and reports the
// distance of P_lambda^{-1} to Sigma together with the monotonicity flags.
// Individual solver failures are recorded and the sweep continues.
std::vector<LambdaStudyRow> lambda_limit_study(
    const TildeBlock& tb, const LeaderBlock& lb, const FollowerHatBlock& hat,
    const Generator& g, const RiccatiSolution& Sigma,
    const std::vector<double>& lambdas, int steps);

struct CertificateRegime {
  int regime = 0;
  double min_eig = 0.0;
  bool pass = false;
};
struct Certificate {
  std::vector<CertificateRegime> regimes;
  bool pass = false;
};

// Positive definiteness of  [ calQ  0  calS' ; 0 calR1 0 ; calS 0 calR2 ]
// per regime over the grid; a failed certificate is a valid outcome.
Certificate solvability_certificate(const OneDimBlock& block);

// Right-hand sides exposed for cross-checks and independent integrators.
// `piece_time` selects the piecewise-constant coefficient piece (defaults to
// the evaluation time; integrators pass the enclosing cell's midpoint).
namespace rhs {

// Follower equation at one regime given all regime values of P.
Eigen::MatrixXd follower(const ProblemData& p, double s, int regime,
                         const std::vector<Eigen::MatrixXd>& P,
                         double cond_ceiling = 1e12, double piece_time = -1.0);

// Leader equation at one regime given all regime values of Sigma.
Eigen::MatrixXd leader(const DerivedBlocks& src, const Generator& g, double s,
                       int regime, const std::vector<Eigen::MatrixXd>& Sigma,
                       double piece_time = -1.0);

// Lambda-family equation at one regime given all regime values of P.
Eigen::MatrixXd lambda_family(const DerivedBlocks& src, const Generator& g,
                              double s, int regime,
                              const std::vector<Eigen::MatrixXd>& P,
                              double piece_time = -1.0);

// Scalar rewrite of the leader equation (state dimension 1).
double leader_rewritten(const DerivedBlocks& src, const Generator& g, double s,
                        int regime, const std::vector<Eigen::MatrixXd>& Sigma,
                        double piece_time = -1.0);

// Rewrite evaluated through the two-control block embedding.
double leader_embedded(const DerivedBlocks& src, const Generator& g, double s,
                       int regime, const std::vector<Eigen::MatrixXd>& Sigma,
                       double piece_time = -1.0);

}  // namespace rhs

}  // namespace rslq
