#include "rslq/riccati.hpp"

#include <algorithm>
#include <cmath>

#include "rslq/linalg.hpp"

#include "backward_rk4.hpp"

namespace rslq {

namespace {

using detail::MatState;
using detail::integrate_backward;
using detail::max_ode_residual;

void require_breakpoint_alignment(const TimeGrid& g,
                                  const std::vector<double>& breakpoints) {
  for (double b : breakpoints)
    if (b > 0.0 && b < g.horizon &&
        !g.contains_as_node(b, 1e-9 * std::max(1.0, g.horizon)))
      throw Error("grid does not contain coefficient breakpoint t=" +
                  std::to_string(b) + " as a node; refine steps");
}

const DerivedBlocks& shared_source(const TildeBlock& tb, const LeaderBlock& lb,
                                   const FollowerHatBlock& hat) {
  if (tb.source != lb.source || lb.source != hat.source)
    throw Error("block views do not share one evaluation source");
  return *tb.source;
}

}  // namespace

namespace rhs {

Eigen::MatrixXd follower(const ProblemData& p, double s, int regime,
                         const std::vector<Eigen::MatrixXd>& P,
                         double cond_ceiling, double piece_time) {
  if (piece_time < 0.0) piece_time = s;
  const int i = regime;
  const Eigen::MatrixXd& A = p.A.at(piece_time, i);
  const Eigen::MatrixXd& C = p.C.at(piece_time, i);
  const Eigen::MatrixXd& B1 = p.B1.at(piece_time, i);
  const Eigen::MatrixXd& D1 = p.D1.at(piece_time, i);
  const Eigen::MatrixXd& Pi = P[i - 1];

  Eigen::MatrixXd S1hat = B1.transpose() * Pi + D1.transpose() * Pi * C;
  Eigen::MatrixXd R1hat = p.R1.at(piece_time, i) + D1.transpose() * Pi * D1;
  symmetrize(R1hat);
  auto inv = spd_inverse(R1hat, cond_ceiling,
                         "follower strong regularity (R1hat)", s, i);

  Eigen::MatrixXd out = -Pi * A - A.transpose() * Pi -
                        C.transpose() * Pi * C +
                        S1hat.transpose() * inv.inverse * S1hat -
                        p.Q.at(piece_time, i);
  const Eigen::MatrixXd& rates = p.generator.rates(piece_time);
  for (int k = 1; k <= p.num_regimes; ++k)
    out -= rates(i - 1, k - 1) * P[k - 1];
  return out;
}

Eigen::MatrixXd leader(const DerivedBlocks& src, const Generator& g, double s,
                       int regime, const std::vector<Eigen::MatrixXd>& Sigma,
                       double piece_time) {
  if (piece_time < 0.0) piece_time = s;
  const int i = regime;
  const auto a = src.all(s, piece_time, i);
  const Eigen::MatrixXd& Si = Sigma[i - 1];
  const SigmaOps ops =
      sigma_ops(Si, a.tilde, a.leader, a.hat, src.cond_ceiling(), s, i);

  Eigen::MatrixXd out = a.hat.Ahat * Si + Si * a.hat.Ahat.transpose() +
                        Si * a.leader.G * Si -
                        ops.Fhat * ops.That_inv * Si * ops.Fhat.transpose() -
                        ops.Hhat * a.leader.T22_inv * ops.Hhat.transpose();
  const Eigen::MatrixXd& rates = g.rates(piece_time);
  for (int k = 1; k <= g.num_regimes(); ++k)
    out -= rates(i - 1, k - 1) * Sigma[k - 1];
  return out;
}

Eigen::MatrixXd lambda_family(const DerivedBlocks& src, const Generator& g,
                              double s, int regime,
                              const std::vector<Eigen::MatrixXd>& P,
                              double piece_time) {
  if (piece_time < 0.0) piece_time = s;
  const int i = regime;
  const auto a = src.all(s, piece_time, i);
  const Eigen::MatrixXd& Pi = P[i - 1];
  const int n = Pi.rows();

  Eigen::MatrixXd U = a.tilde.Ftilde.transpose() * Pi + a.tilde.S1tilde;
  Eigen::MatrixXd V = a.hat.Hhat.transpose() * Pi + a.leader.S2;
  Eigen::MatrixXd T11P = a.tilde.T11tilde + Pi;
  symmetrize(T11P);
  auto t11p_inv = spd_inverse(T11P, src.cond_ceiling(),
                              "lambda family weight T11tilde + P", s, i);

  Eigen::MatrixXd out = -Pi * a.hat.Ahat - a.hat.Ahat.transpose() * Pi -
                        a.leader.G +
                        U.transpose() * t11p_inv.inverse * U +
                        V.transpose() * a.leader.T22_inv * V;
  const Eigen::MatrixXd& rates = g.rates(piece_time);
  for (int k = 1; k <= g.num_regimes(); ++k) {
    const double rate = rates(i - 1, k - 1);
    if (rate == 0.0) continue;
    if (k == i) {
      out += rate * Pi;
    } else {
      auto pk_inv = spd_inverse(P[k - 1], src.cond_ceiling(),
                                "lambda family P(regime " + std::to_string(k) +
                                    ") in jump coupling",
                                s, i);
      out += rate * Pi * pk_inv.inverse * Pi;
    }
  }
  (void)n;
  return out;
}

double leader_rewritten(const DerivedBlocks& src, const Generator& g, double s,
                        int regime, const std::vector<Eigen::MatrixXd>& Sigma,
                        double piece_time) {
  if (piece_time < 0.0) piece_time = s;
  const OneDimEval r = src.one_dim(s, piece_time, regime);
  const double S = Sigma[regime - 1](0, 0);
  double out = -2.0 * r.calA * S - r.calQ + S * S / r.calR1;
  const double num = r.calB * S + r.calS;
  out += num * num / (r.calR2 + r.calD * S * r.calD);
  const Eigen::MatrixXd& rates = g.rates(piece_time);
  for (int k = 1; k <= g.num_regimes(); ++k)
    out -= rates(regime - 1, k - 1) * Sigma[k - 1](0, 0);
  return out;
}

double leader_embedded(const DerivedBlocks& src, const Generator& g, double s,
                       int regime, const std::vector<Eigen::MatrixXd>& Sigma,
                       double piece_time) {
  if (piece_time < 0.0) piece_time = s;
  const OneDimEval r = src.one_dim(s, piece_time, regime);
  const double S = Sigma[regime - 1](0, 0);
  const Eigen::MatrixXd bbA = Eigen::MatrixXd::Constant(1, 1, r.calA);
  const Eigen::MatrixXd bbQ = Eigen::MatrixXd::Constant(1, 1, r.calQ);
  const Eigen::MatrixXd Sm = Eigen::MatrixXd::Constant(1, 1, S);

  const Eigen::MatrixXd gain =
      Sm * r.bbB + r.bbS.transpose();  // C-block is zero
  const Eigen::MatrixXd weight = r.bbR + r.bbD.transpose() * Sm * r.bbD;
  Eigen::MatrixXd out = -Sm * bbA - bbA.transpose() * Sm - bbQ +
                        gain * weight.inverse() * gain.transpose();
  const Eigen::MatrixXd& rates = g.rates(piece_time);
  for (int k = 1; k <= g.num_regimes(); ++k)
    out -= rates(regime - 1, k - 1) * Sigma[k - 1];
  return out(0, 0);
}

}  // namespace rhs

RiccatiSolution solve_follower_cdre(std::shared_ptr<const ProblemData> p,
                                    int steps, double cond_ceiling) {
  if (p->is_reduced())
    throw UnsupportedError(
        "follower equation: reduced problems provide blocks directly");
  if (steps < 10) throw Error("solve_follower_cdre: steps must be >= 10");
  const auto breakpoints = p->breakpoints();
  const TimeGrid grid = TimeGrid::aligned(p->horizon, steps, breakpoints);

  RiccatiSolution sol;
  sol.kind = RiccatiSolution::Kind::follower_p;
  sol.grid = grid;
  sol.meta.step = grid.step;
  sol.meta.steps_used = grid.cells;

  MatState terminal(p->num_regimes);
  for (int i = 0; i < p->num_regimes; ++i) terminal[i] = p->M[i];

  auto rhs_fn = [&](double s, double sp, const MatState& P) {
    MatState out(P.size());
    for (int i = 1; i <= p->num_regimes; ++i)
      out[i - 1] = rhs::follower(*p, s, i, P, cond_ceiling, sp);
    return out;
  };
  auto post = [&](int /*node*/, double s, MatState& P) {
    for (int i = 1; i <= p->num_regimes; ++i) {
      const double defect =
          (P[i - 1] - P[i - 1].transpose()).cwiseAbs().maxCoeff();
      sol.meta.max_symmetry_defect =
          std::max(sol.meta.max_symmetry_defect, defect);
      symmetrize(P[i - 1]);
      Eigen::MatrixXd R1hat =
          p->R1.at(s, i) +
          p->D1.at(s, i).transpose() * P[i - 1] * p->D1.at(s, i);
      symmetrize(R1hat);
      const double margin = min_eigenvalue(R1hat);
      sol.meta.min_r1hat_eig = std::min(sol.meta.min_r1hat_eig, margin);
      if (margin <= 0.0)
        throw RegularityError(
            "follower strong regularity (R1hat) lost; uniform convexity of "
            "the data is in doubt",
            s, i);
    }
  };

  integrate_backward(grid, std::move(terminal), rhs_fn, post, sol.value,
                     sol.deriv);
  sol.meta.max_ode_residual =
      max_ode_residual(grid, sol.value, sol.deriv, breakpoints);
  return sol;
}

RiccatiSolution solve_leader_cdre(const TildeBlock& tb, const LeaderBlock& lb,
                                  const FollowerHatBlock& hat,
                                  const Generator& g, int steps) {
  const DerivedBlocks& src = shared_source(tb, lb, hat);
  if (steps < 10) throw Error("solve_leader_cdre: steps must be >= 10");
  const auto breakpoints = src.problem().breakpoints();
  const TimeGrid grid = TimeGrid::aligned(src.horizon(), steps, breakpoints);
  require_breakpoint_alignment(grid, breakpoints);
  if (const RiccatiSolution* P = src.follower_p()) {
    const bool fine_enough = P->grid.cells % (2 * grid.cells) == 0;
    if (!fine_enough)
      throw Error(
          "leader equation: follower solution grid must refine twice the "
          "requested grid (solve P with at least 2x the leader steps)");
  }

  const int D = src.num_regimes();
  const int n = src.problem().n;

  RiccatiSolution sol;
  sol.kind = RiccatiSolution::Kind::leader_sigma;
  sol.grid = grid;
  sol.meta.step = grid.step;
  sol.meta.steps_used = grid.cells;

  MatState terminal(D, Eigen::MatrixXd::Zero(n, n));

  auto rhs_fn = [&](double s, double sp, const MatState& Sigma) {
    MatState out(Sigma.size());
    for (int i = 1; i <= D; ++i)
      out[i - 1] = rhs::leader(src, g, s, i, Sigma, sp);
    return out;
  };
  auto post = [&](int /*node*/, double s, MatState& Sigma) {
    for (int i = 1; i <= D; ++i) {
      const double defect =
          (Sigma[i - 1] - Sigma[i - 1].transpose()).cwiseAbs().maxCoeff();
      sol.meta.max_symmetry_defect =
          std::max(sol.meta.max_symmetry_defect, defect);
      symmetrize(Sigma[i - 1]);
      const auto a = src.all(s, i);
      const SigmaOps ops = sigma_ops(Sigma[i - 1], a.tilde, a.leader, a.hat,
                                     src.cond_ceiling(), s, i);
      sol.meta.max_that_condition =
          std::max(sol.meta.max_that_condition, ops.that_condition);
      sol.meta.min_t22_eig =
          std::min(sol.meta.min_t22_eig, a.leader.t22_min_eig);
    }
  };

  integrate_backward(grid, std::move(terminal), rhs_fn, post, sol.value,
                     sol.deriv);
  sol.meta.max_ode_residual =
      max_ode_residual(grid, sol.value, sol.deriv, breakpoints);
  return sol;
}

RiccatiSolution solve_lambda_cdre(const TildeBlock& tb, const LeaderBlock& lb,
                                  const FollowerHatBlock& hat,
                                  const Generator& g, double lambda,
                                  int steps) {
  const DerivedBlocks& base_src = shared_source(tb, lb, hat);
  if (lambda <= 0.0) throw Error("solve_lambda_cdre: lambda must be positive");
  if (steps < 10) throw Error("solve_lambda_cdre: steps must be >= 10");

  // The terminal layer has width ~1/lambda and the right-hand side grows
  // like 2*|Hhat T22^{-1} Hhat'|*P there; refine the fixed step so h times
  // that Lipschitz bound stays well inside the explicit stability region,
  // keeping the requested nodes as a subset.
  const double horizon = base_src.horizon();
  double quad_bound = 0.0;
  for (int i = 1; i <= base_src.num_regimes(); ++i) {
    const auto a = base_src.all(horizon, i);
    const double qh =
        (a.hat.Hhat * a.leader.T22_inv * a.hat.Hhat.transpose())
            .cwiseAbs()
            .maxCoeff();
    quad_bound = std::max(quad_bound, qh);
  }
  const double coef = 4.0 * quad_bound + 4.0;
  const int layer_cells = static_cast<int>(std::ceil(coef * lambda * horizon));
  const int factor =
      std::max(1, (layer_cells + steps - 1) / steps);
  const auto breakpoints = base_src.problem().breakpoints();
  const TimeGrid grid =
      TimeGrid::aligned(horizon, steps * factor, breakpoints);

  // Primal sources evaluate the follower solution at exact stage times, so P
  // is re-tabulated at twice this solver's refined resolution.
  std::shared_ptr<const DerivedBlocks> src_holder;
  const DerivedBlocks* srcp = &base_src;
  if (!base_src.reduced()) {
    auto P = std::make_shared<RiccatiSolution>(solve_follower_cdre(
        base_src.problem_ptr(), 2 * grid.cells, base_src.cond_ceiling()));
    src_holder = DerivedBlocks::from_problem(base_src.problem_ptr(),
                                             std::move(P),
                                             base_src.cond_ceiling());
    srcp = src_holder.get();
  }
  const DerivedBlocks& src = *srcp;

  const int D = src.num_regimes();
  const int n = src.problem().n;

  RiccatiSolution sol;
  sol.kind = RiccatiSolution::Kind::lambda_p;
  sol.grid = grid;
  sol.meta.step = grid.step;
  sol.meta.steps_used = grid.cells;
  sol.meta.lambda = lambda;

  MatState terminal(D,
                    lambda * Eigen::MatrixXd::Identity(n, n));

  auto rhs_fn = [&](double s, double sp, const MatState& P) {
    MatState out(P.size());
    for (int i = 1; i <= D; ++i)
      out[i - 1] = rhs::lambda_family(src, g, s, i, P, sp);
    return out;
  };
  auto post = [&](int /*node*/, double s, MatState& P) {
    for (int i = 1; i <= D; ++i) {
      symmetrize(P[i - 1]);
      const double margin = min_eigenvalue(P[i - 1]);
      sol.meta.min_p_eig = std::min(sol.meta.min_p_eig, margin);
      if (margin <= 0.0)
        throw RegularityError(
            "lambda-family solution lost positive definiteness (the "
            "solvability of this system is conjectural; treat as an "
            "experimental outcome)",
            s, i);
    }
  };

  integrate_backward(grid, std::move(terminal), rhs_fn, post, sol.value,
                     sol.deriv);
  sol.meta.max_ode_residual =
      max_ode_residual(grid, sol.value, sol.deriv, breakpoints);
  return sol;
}

std::vector<LambdaStudyRow> lambda_limit_study(
    const TildeBlock& tb, const LeaderBlock& lb, const FollowerHatBlock& hat,
    const Generator& g, const RiccatiSolution& Sigma,
    const std::vector<double>& lambdas, int steps) {
  std::vector<double> sorted = lambdas;
  std::sort(sorted.begin(), sorted.end());

  std::vector<LambdaStudyRow> rows;
  std::optional<RiccatiSolution> prev;
  for (double lambda : sorted) {
    LambdaStudyRow row;
    row.lambda = lambda;
    try {
      RiccatiSolution P = solve_lambda_cdre(tb, lb, hat, g, lambda, steps);
      row.steps_used = P.meta.steps_used;
      row.solved = true;

      // Compare on the Sigma grid; the lambda grid refines it by an integer
      // factor because both stem from the same aligned base grid.
      double gap = 0.0;
      for (int j = 0; j < Sigma.grid.nodes(); ++j) {
        const double s = Sigma.grid.node(j);
        for (int i = 1; i <= Sigma.num_regimes(); ++i) {
          const Eigen::MatrixXd Pinv =
              P.at_time(s, i).inverse();
          gap = std::max(gap,
                         (Pinv - Sigma.at_node(j, i)).cwiseAbs().maxCoeff());
        }
      }
      row.sup_gap = gap;

      if (prev) {
        double min_margin = std::numeric_limits<double>::infinity();
        double max_inv_excess = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < Sigma.grid.nodes(); ++j) {
          const double s = Sigma.grid.node(j);
          for (int i = 1; i <= Sigma.num_regimes(); ++i) {
            const Eigen::MatrixXd diff =
                P.at_time(s, i) - prev->at_time(s, i);
            min_margin = std::min(min_margin, min_eigenvalue(diff));
            const Eigen::MatrixXd inv_diff =
                P.at_time(s, i).inverse() - prev->at_time(s, i).inverse();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
                0.5 * (inv_diff + inv_diff.transpose()));
            max_inv_excess =
                std::max(max_inv_excess, es.eigenvalues().maxCoeff());
          }
        }
        row.min_monotone_margin = min_margin;
        row.monotone_vs_prev = min_margin >= -1e-8;
        row.inverse_monotone_vs_prev = max_inv_excess <= 1e-8;
      }
      prev = std::move(P);
    } catch (const Error& e) {
      row.solved = false;
      row.error = e.what();
      prev.reset();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Certificate solvability_certificate(const OneDimBlock& block) {
  Certificate cert;
  const int D = block.source->num_regimes();
  cert.regimes.resize(D);
  cert.pass = true;
  for (int i = 1; i <= D; ++i) {
    double min_eig = std::numeric_limits<double>::infinity();
    for (int j = 0; j < block.grid.nodes(); ++j) {
      const OneDimEval& r = block.at[j][i - 1];
      Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
      m(0, 0) = r.calQ;
      m(1, 1) = r.calR1;
      m(2, 2) = r.calR2;
      m(0, 2) = m(2, 0) = r.calS;
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
      min_eig = std::min(min_eig, es.eigenvalues().minCoeff());
    }
    cert.regimes[i - 1] = {i, min_eig, min_eig > 0.0};
    cert.pass = cert.pass && min_eig > 0.0;
  }
  return cert;
}

}  // namespace rslq
