#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "rslq/backward.hpp"
#include "rslq/policy.hpp"
#include "rslq/rng.hpp"

namespace rslq {

struct CostEstimate {
  double mean = 0.0;
  double se = 0.0;  // sample standard deviation / sqrt(paths)
  long long paths = 0;
  std::string tag = "J";
};

// One simulated trajectory with everything the verification checks need.
struct PathBundle {
  RegimePath chain;
  std::vector<double> dW;
  std::vector<Eigen::VectorXd> X, phi_star, u1, u2, ups, Y, Z;
  double cost = 0.0;  // game functional (reduced leader cost for reduced problems)
  std::uint64_t path_index = 0;
};

struct McOptions {
  long long paths = 1000;
  std::uint64_t seed = 1;
  int workers = 1;  // <=1: serial; results are identical for any worker count
};

enum class CostFunctional {
  game,            // running Q/R1/R2 plus terminal M/m
  follower,        // running Q/R1 plus terminal M/m (no R2 term)
  leader_reduced,  // reduced block functional over (Y, Z, u2)
};

struct ControlSpec {
  enum class Kind { zero, deterministic, equilibrium };
  Kind kind = Kind::equilibrium;
  RegimeControl fn;  // used when kind == deterministic

  static ControlSpec zero() { return {Kind::zero, {}}; }
  static ControlSpec deterministic(RegimeControl f) {
    return {Kind::deterministic, std::move(f)};
  }
  static ControlSpec equilibrium() { return {Kind::equilibrium, {}}; }
};

// Closed-loop simulation with full recording. Intended for moderate path
// counts; the estimators below stream instead of recording.
std::vector<PathBundle> simulate_closed_loop(const EquilibriumPolicy& policy,
                                             const McOptions& opts);

// Sample-mean estimate of a cost functional under the given control pair,
// starting from (x, i0). `homogeneous` zeroes b, sigma and the terminal
// linear term (the J^0 functional); it requires non-equilibrium specs.
CostEstimate estimate_cost(const EquilibriumPolicy& policy,
                           const ControlSpec& u1, const ControlSpec& u2,
                           const Eigen::VectorXd& x, int i0,
                           const McOptions& opts,
                           CostFunctional functional = CostFunctional::game,
                           bool homogeneous = false);

// Per-path paired difference of two control pairs (common random numbers);
// with paired == false the two legs use independent streams.
CostEstimate estimate_cost_difference(const EquilibriumPolicy& policy,
                                      const ControlSpec& u1a,
                                      const ControlSpec& u2a,
                                      const ControlSpec& u1b,
                                      const ControlSpec& u2b,
                                      const Eigen::VectorXd& x, int i0,
                                      const McOptions& opts, bool paired);

// Monte Carlo estimate of the reduced leader functional at equilibrium.
CostEstimate estimate_leader_cost(const EquilibriumPolicy& policy,
                                  const Eigen::VectorXd& x, int i0,
                                  const McOptions& opts);

struct StationarityReport {
  double max_residual = 0.0;
  double mean_residual = 0.0;
  long long paths = 0;
};

// Pointwise residual of the stationarity identity along simulated paths,
// with an optional constant offset added to u2 (a nonzero offset shifts the
// residual by T22*offset and is used to confirm the check's sensitivity).
StationarityReport stationarity_residual(const EquilibriumPolicy& policy,
                                         const McOptions& opts,
                                         double u2_offset = 0.0);

struct DirectionResult {
  double mean_diff = 0.0;
  double se = 0.0;
  double mean_diff_double_eps = 0.0;  // follower side only
  double se_double_eps = 0.0;
  bool pass = false;
};

struct SaddleReport {
  double eps = 0.0;
  long long paths = 0;
  std::vector<DirectionResult> follower;  // J(u1*+eps v, u2*) - J* >= -3 se
  std::vector<DirectionResult> leader;    // J(reaction, u2*+eps w) - J* <= 3 se
  int follower_pass = 0;
  int leader_pass = 0;
  double eps2_ratio = 0.0;  // aggregate follower diff at 2 eps over eps
  bool pass_follower_all = false;
  bool pass_leader_95 = false;
};

// Perturbation test of the equilibrium inequalities with common random
// numbers: each path is simulated once and every direction is replayed on
// the same noise. Follower directions perturb u1 openly; leader directions
// perturb the announced u2 and replay the follower's exact rational
// reaction, whose linear part is a deterministic table by the reduction.
SaddleReport saddle_probe(const EquilibriumPolicy& policy, double eps,
                          int directions, const McOptions& opts);

struct ValueCheckRow {
  Eigen::VectorXd x;
  double analytic = 0.0;
  double mc = 0.0;
  double se = 0.0;
  bool pass = false;
  double vf_analytic = 0.0;
  double vf_mc = 0.0;
  double vf_se = 0.0;
  bool vf_available = false;
  bool vf_pass = true;
};

// Analytic value function against the Monte Carlo equilibrium cost (and the
// follower value formula against the follower-side cost) at 3 standard
// errors plus a small absolute floor for noise-free cases.
std::vector<ValueCheckRow> value_check(const EquilibriumPolicy& policy,
                                       const std::vector<Eigen::VectorXd>& xs,
                                       const McOptions& opts);

// Unit-energy piecewise-constant regime-indexed direction; energy is taken
// against the chain law started from i0.
std::vector<std::vector<Eigen::VectorXd>> random_direction(
    const TimeGrid& grid, int num_regimes, int dim, int i0,
    const Generator& gen, RngStream& rng);

}  // namespace rslq
