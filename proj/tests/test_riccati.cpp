#include <doctest.h>

#include <cmath>

#include "rslq/riccati.hpp"
#include "support/fixtures.hpp"

using namespace rslq;

namespace {

double sigma_analytic(double s) { return (s - 1.0) / (s - 2.0); }

std::shared_ptr<const RiccatiSolution> solve_p(
    std::shared_ptr<const ProblemData> p, int steps) {
  return std::make_shared<RiccatiSolution>(solve_follower_cdre(p, steps));
}

struct LeaderSetup {
  FollowerHatBlock hat;
  LeaderBlock lb;
  TildeBlock tb;
};

LeaderSetup example1_blocks(int p_steps) {
  auto p = testsupport::example1();
  auto P = solve_p(p, p_steps);
  LeaderSetup s;
  s.hat = follower_hat(p, P);
  s.lb = leader_block(s.hat);
  s.tb = tilde_block(s.lb);
  return s;
}

LeaderSetup example2_blocks() {
  auto set = reduced_blocks(testsupport::example2(), 20);
  return {std::move(set.hat), std::move(set.leader), std::move(set.tilde)};
}

}  // namespace

TEST_CASE("example 1 follower solution is identically -1") {
  auto p = testsupport::example1();
  RiccatiSolution P = solve_follower_cdre(p, 1000);
  double worst = 0.0;
  for (int j = 0; j < P.grid.nodes(); ++j)
    for (int i = 1; i <= 2; ++i)
      worst = std::max(worst, std::abs(P.at_node(j, i)(0, 0) + 1.0));
  CHECK(worst <= 1e-10);
  CHECK(P.at_time(1.0, 1)(0, 0) == -1.0);  // terminal exact
  CHECK(P.meta.min_r1hat_eig > 0.9);
}

TEST_CASE("zero data give the zero follower solution") {
  const std::string text = R"prob(
[meta]
T = 1
n = 1
m1 = 1
m2 = 1
D = 2
[generator]
-0.5 0.5
0.7 -0.7
[regime 1]
B1 = 0.7
D1 = 0.4
R1 = 1
R2 = -1
[regime 2]
B1 = -0.3
D1 = 0.2
R1 = 1
R2 = -1
[initial]
x = 0
i = 1
)prob";
  auto p = std::make_shared<ProblemData>(load_problem(text));
  RiccatiSolution P = solve_follower_cdre(p, 100);
  for (int j = 0; j < P.grid.nodes(); ++j)
    for (int i = 1; i <= 2; ++i)
      CHECK(std::abs(P.at_node(j, i)(0, 0)) <= 1e-14);
}

TEST_CASE("follower solver reproduces the scalar linear closed form at order 4") {
  // Single regime, B1 = D1 = 0: dP/ds = alpha P + beta with
  // alpha = -(2a + c^2), beta = -q0, P(T) = M0.
  const double a = 0.4, c = 0.3, q0 = 0.8, M0 = 0.5, T = 1.0;
  const double alpha = -(2.0 * a + c * c), beta = -q0;
  auto closed = [&](double s) {
    return (M0 + beta / alpha) * std::exp(alpha * (s - T)) - beta / alpha;
  };
  const std::string text = R"prob(
[meta]
T = 1
n = 1
m1 = 1
m2 = 1
D = 1
[generator]
0
[regime 1]
A = 0.4
C = 0.3
Q = 0.8
R1 = 1
R2 = -1
M = 0.5
[initial]
x = 0
i = 1
)prob";
  auto p = std::make_shared<ProblemData>(load_problem(text));
  double prev_err = 0.0;
  int k = 0;
  for (int steps : {100, 200, 400}) {
    RiccatiSolution P = solve_follower_cdre(p, steps);
    double err = 0.0;
    for (int j = 0; j < P.grid.nodes(); ++j)
      err = std::max(err,
                     std::abs(P.at_node(j, 1)(0, 0) - closed(P.grid.node(j))));
    if (k > 0) {
      const double ratio = prev_err / err;
      CHECK(ratio > 12.0);
      CHECK(ratio < 20.0);
    }
    prev_err = err;
    ++k;
  }
  CHECK(prev_err < 1e-11);
}

TEST_CASE("example 1 leader solution matches (s-1)/(s-2)") {
  LeaderSetup s = example1_blocks(4000);
  RiccatiSolution Sigma =
      solve_leader_cdre(s.tb, s.lb, s.hat, testsupport::example1()->generator,
                        1000);
  double worst = 0.0;
  for (int j = 0; j < Sigma.grid.nodes(); ++j)
    for (int i = 1; i <= 2; ++i)
      worst = std::max(worst, std::abs(Sigma.at_node(j, i)(0, 0) -
                                       sigma_analytic(Sigma.grid.node(j))));
  CHECK(worst <= 1e-6);
  CHECK(Sigma.at_time(1.0, 1)(0, 0) == 0.0);
  CHECK(Sigma.at_time(1.0, 2)(0, 0) == 0.0);
  CHECK(Sigma.meta.max_symmetry_defect <= 1e-10);
}

TEST_CASE("leader solver converges at order 4 under step halving") {
  auto p = testsupport::example1();
  auto P = solve_p(p, 1600);
  FollowerHatBlock hat = follower_hat(p, P);
  LeaderBlock lb = leader_block(hat);
  TildeBlock tb = tilde_block(lb);
  double prev_err = 0.0;
  int k = 0;
  for (int steps : {100, 200, 400}) {  // h = 1e-2, 5e-3, 2.5e-3
    RiccatiSolution Sigma = solve_leader_cdre(tb, lb, hat, p->generator, steps);
    double err = 0.0;
    for (int j = 0; j < Sigma.grid.nodes(); ++j)
      err = std::max(err, std::abs(Sigma.at_node(j, 1)(0, 0) -
                                   sigma_analytic(Sigma.grid.node(j))));
    if (k > 0) {
      const double ratio = prev_err / err;
      CHECK(ratio > 12.0);
      CHECK(ratio < 20.0);
    }
    prev_err = err;
    ++k;
  }
}

TEST_CASE("example 2 leader solution is consistent across integrators") {
  LeaderSetup s = example2_blocks();
  auto p = testsupport::example2();
  RiccatiSolution Sigma = solve_leader_cdre(s.tb, s.lb, s.hat, p->generator,
                                            500);
  CHECK(Sigma.meta.max_ode_residual < 1e-6);
  CHECK(Sigma.meta.max_that_condition < 1e6);
  CHECK(Sigma.at_time(1.0, 1)(0, 0) == 0.0);

  // Independent 3/8-rule integration at ten times the resolution.
  auto src = Sigma;
  auto blocks = DerivedBlocks::from_reduced(p);
  std::vector<Eigen::MatrixXd> terminal(2, Eigen::MatrixXd::Zero(1, 1));
  auto fine = testsupport::rk38_backward(
      1.0, 5000, terminal,
      [&](double t, double piece, const std::vector<Eigen::MatrixXd>& S) {
        std::vector<Eigen::MatrixXd> out(2);
        for (int i = 1; i <= 2; ++i)
          out[i - 1] = rhs::leader(*blocks, p->generator, t, i, S, piece);
        return out;
      });
  double gap = 0.0;
  for (int j = 0; j < Sigma.grid.nodes(); ++j)
    for (int i = 1; i <= 2; ++i)
      gap = std::max(gap, std::abs(Sigma.at_node(j, i)(0, 0) -
                                   fine[j * 10][i - 1](0, 0)));
  CHECK(gap <= 1e-7);
}

TEST_CASE("lambda solver honors the terminal condition exactly") {
  LeaderSetup s = example2_blocks();
  RiccatiSolution P = solve_lambda_cdre(
      s.tb, s.lb, s.hat, testsupport::example2()->generator, 25.0, 100);
  CHECK(P.at_time(1.0, 1)(0, 0) == 25.0);
  CHECK(P.at_time(1.0, 2)(0, 0) == 25.0);
  CHECK(P.meta.min_p_eig > 0.0);
}

TEST_CASE("lambda family inverse approaches the leader solution") {
  LeaderSetup s = example2_blocks();
  const Generator& g = testsupport::example2()->generator;
  RiccatiSolution Sigma = solve_leader_cdre(s.tb, s.lb, s.hat, g, 200);
  auto rows = lambda_limit_study(s.tb, s.lb, s.hat, g, Sigma,
                                 {10.0, 100.0, 1000.0}, 200);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) CHECK(r.solved);
  CHECK(rows[0].sup_gap > rows[1].sup_gap);
  CHECK(rows[1].sup_gap > rows[2].sup_gap);
  CHECK(rows[2].sup_gap < 50.0 / 1000.0);  // O(1/lambda) scale
  CHECK(rows[1].monotone_vs_prev);
  CHECK(rows[2].monotone_vs_prev);
  CHECK(rows[1].inverse_monotone_vs_prev);
  CHECK(rows[2].inverse_monotone_vs_prev);
}

TEST_CASE("lambda family converges on the analytically solvable game") {
  LeaderSetup s = example1_blocks(1600);
  const Generator& g = testsupport::example1()->generator;
  RiccatiSolution Sigma = solve_leader_cdre(s.tb, s.lb, s.hat, g, 200);
  auto rows = lambda_limit_study(s.tb, s.lb, s.hat, g, Sigma,
                                 {100.0, 10000.0}, 200);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].solved);
  CHECK(rows[1].solved);
  CHECK(rows[1].sup_gap < rows[0].sup_gap);
  CHECK(rows[1].sup_gap < 1e-2);
}

TEST_CASE("solvability certificate passes on the second example") {
  auto set = reduced_blocks(testsupport::example2(), 20);
  Certificate cert = solvability_certificate(one_dim_rewrite(set.tilde));
  REQUIRE(cert.regimes.size() == 2);
  CHECK(cert.pass);
  CHECK(cert.regimes[0].pass);
  CHECK(cert.regimes[1].pass);
  CHECK(std::abs(cert.regimes[0].min_eig - 7.0 / 17.0) < 1e-14);
  CHECK(cert.regimes[1].min_eig > 0.0);
  CHECK(cert.regimes[1].min_eig ==
        doctest::Approx(3.0 / 8.0).epsilon(1e-12));  // smallest diagonal block
}

TEST_CASE("semidefinite certificate matrices fail the certificate") {
  const std::string text = R"prob(
[meta]
T = 1
n = 1
m1 = 0
m2 = 1
D = 1
kind = reduced
[generator]
0
[regime 1]
Ahat = 0
Chat = 0
Hhat = 0
G = 1
S1 = 0
S2 = 0
T11 = 1
T12 = 0
T22 = 1
m = 0
[initial]
x = 0
i = 1
)prob";
  auto p = std::make_shared<ProblemData>(load_problem(text));
  auto set = reduced_blocks(p, 20);
  Certificate cert = solvability_certificate(one_dim_rewrite(set.tilde));
  CHECK_FALSE(cert.pass);
  CHECK(std::abs(cert.regimes[0].min_eig) < 1e-14);
}

TEST_CASE("matrix-valued solves stay symmetric with small residuals") {
  const std::string text = R"prob(
[meta]
T = 1
n = 2
m1 = 1
m2 = 1
D = 2
[generator]
-0.5 0.5
0.7 -0.7
[regime 1]
A = 0.2 0.1; 0 -0.1
B1 = 0.5; 0.1
B2 = 1; 0
C = 0.1 0; 0.05 0.1
D1 = 0.8; 0.2
D2 = 0.2; -0.1
b = 0.1 0
sigma = 0.1 0.05
Q = 1 0.2; 0.2 0.8
R1 = 2
R2 = -2
M = 0.4 0.1; 0.1 0.3
m = 0.2 -0.1
[regime 2]
A = -0.1 0; 0.1 0.2
B1 = 0.3; -0.2
B2 = -0.5; 0.4
C = 0 0.1; 0.1 0
D1 = 0.5; 0.3
D2 = -0.1; 0.2
b = 0 -0.1
sigma = 0.05 0.1
Q = 0.6 0; 0 0.9
R1 = 1.5
R2 = -3
M = 0.2 0; 0 0.1
m = -0.1 0.1
[initial]
x = 0.5 -0.3
i = 1
)prob";
  auto p = std::make_shared<ProblemData>(load_problem(text));
  auto P = solve_p(p, 800);
  CHECK(P->meta.max_symmetry_defect <= 1e-10);
  CHECK(P->meta.max_ode_residual < 1e-8);
  CHECK(P->meta.min_r1hat_eig > 0.0);
  FollowerHatBlock hat = follower_hat(p, *&P);
  LeaderBlock lb = leader_block(hat);
  TildeBlock tb = tilde_block(lb);
  RiccatiSolution Sigma = solve_leader_cdre(tb, lb, hat, p->generator, 400);
  CHECK(Sigma.meta.max_symmetry_defect <= 1e-10);
  CHECK(Sigma.meta.max_ode_residual < 1e-7);
  for (int i = 1; i <= 2; ++i)
    CHECK(Sigma.at_time(1.0, i).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("piecewise-constant coefficients integrate exactly across breakpoints") {
  // A coefficient switch at t = 0.5 with a single regime and no noise terms:
  // the closed form concatenates two linear flows.
  const std::string text = R"prob(
[meta]
T = 1
n = 1
m1 = 1
m2 = 1
D = 1
[generator]
0
[regime 1]
A@0:0.5 = 0.5
A@0.5:1 = -0.25
Q@0:0.5 = 1
Q@0.5:1 = 2
R1 = 1
R2 = -1
M = 0.3
[initial]
x = 0
i = 1
)prob";
  auto p = std::make_shared<ProblemData>(load_problem(text));
  // dP/ds = -2 a(s) P - q(s); solve segmentwise in closed form.
  auto segment = [](double a, double q, double horizon, double terminal) {
    const double alpha = -2.0 * a, beta = -q;
    return (terminal + beta / alpha) * std::exp(alpha * (-horizon)) -
           beta / alpha;
  };
  const double p_half = segment(-0.25, 2.0, 0.5, 0.3);
  const double p_zero = segment(0.5, 1.0, 0.5, p_half);
  RiccatiSolution P = solve_follower_cdre(p, 400);
  CHECK(P.at_time(0.5, 1)(0, 0) == doctest::Approx(p_half).epsilon(1e-9));
  CHECK(P.at_time(0.0, 1)(0, 0) == doctest::Approx(p_zero).epsilon(1e-9));
}
