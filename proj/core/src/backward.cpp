#include "rslq/backward.hpp"

#include "backward_rk4.hpp"
#include "rslq/linalg.hpp"

namespace rslq {

namespace {

using detail::MatState;

BackwardTable from_matstate(const TimeGrid& grid,
                            std::vector<MatState>&& nodes,
                            std::vector<MatState>&& derivs) {
  BackwardTable t;
  t.grid = grid;
  t.value.resize(nodes.size());
  t.deriv.resize(derivs.size());
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    t.value[j].reserve(nodes[j].size());
    t.deriv[j].reserve(derivs[j].size());
    for (auto& m : nodes[j]) t.value[j].emplace_back(std::move(m));
    for (auto& m : derivs[j]) t.deriv[j].emplace_back(std::move(m));
  }
  return t;
}

}  // namespace

RegimeControl zero_control(int dim) {
  return [dim](double, int) { return Eigen::VectorXd::Zero(dim); };
}

RegimeControl cell_control(const TimeGrid& grid,
                           std::vector<std::vector<Eigen::VectorXd>> values) {
  return [grid, values = std::move(values)](double s, int regime) {
    return values[grid.cell_of(s)][regime - 1];
  };
}

BackwardTable solve_phi_bsde(const TildeBlock& tb, const LeaderBlock& lb,
                             const FollowerHatBlock& hat,
                             const RiccatiSolution& Sigma, const Generator& g,
                             const std::vector<Eigen::VectorXd>& terminal,
                             int steps) {
  if (tb.source != lb.source || lb.source != hat.source)
    throw Error("block views do not share one evaluation source");
  const DerivedBlocks& src = *tb.source;
  const int D = src.num_regimes();
  const int n = src.problem().n;
  if (static_cast<int>(terminal.size()) != D)
    throw Error("solve_phi_bsde: expected one terminal vector per regime");

  const auto breakpoints = src.problem().breakpoints();
  const TimeGrid grid = TimeGrid::aligned(src.horizon(), steps, breakpoints);
  if (Sigma.grid.cells % (2 * grid.cells) != 0)
    throw Error(
        "solve_phi_bsde: Sigma grid must refine twice the requested grid");

  MatState term(D);
  for (int i = 0; i < D; ++i) term[i] = terminal[i];

  auto rhs = [&](double s, double sp, const MatState& phi) {
    MatState out(D);
    const Eigen::MatrixXd& rates = g.rates(sp);
    for (int i = 1; i <= D; ++i) {
      const auto a = src.all(s, sp, i);
      const Eigen::MatrixXd& Si = Sigma.at_time(s, i);
      const SigmaOps ops = sigma_ops(Si, a.tilde, a.leader, a.hat,
                                     src.cond_ceiling(), s, i);
      const Eigen::MatrixXd drift =
          a.hat.Ahat - ops.Fhat * ops.That_inv * Si * a.tilde.S1tilde +
          Si * a.leader.G - ops.Hhat * a.leader.T22_inv * a.leader.S2;
      Eigen::VectorXd v =
          drift * phi[i - 1] -
          ops.Fhat * ops.That_inv * (Si * a.tilde.rho1tilde) -
          ops.Hhat * a.leader.T22_inv * a.leader.rho2 +
          Si * a.leader.q + a.hat.fhat;
      for (int k = 1; k <= D; ++k) v -= rates(i - 1, k - 1) * phi[k - 1];
      out[i - 1] = v;
    }
    return out;
  };
  auto post = [&](int, double, MatState&) {};

  std::vector<MatState> nodes, derivs;
  detail::integrate_backward(grid, std::move(term), rhs, post, nodes, derivs);
  BackwardTable t = from_matstate(grid, std::move(nodes), std::move(derivs));
  // exact terminal data
  for (int i = 0; i < D; ++i) t.value[grid.cells][i] = terminal[i];
  (void)n;
  return t;
}

Eigen::VectorXd FollowerReaction::feedback(double s, int regime,
                                           const Eigen::VectorXd& X,
                                           const Eigen::VectorXd& u2,
                                           const Eigen::VectorXd& Y,
                                           const Eigen::VectorXd& Z) const {
  const HatEval h = source->hat(s, regime);
  const ProblemData& p = source->problem();
  const Eigen::MatrixXd& B1 = p.B1.at(s, regime);
  const Eigen::MatrixXd& D1 = p.D1.at(s, regime);
  const Eigen::VectorXd rho1hat =
      B1.transpose() * Y + D1.transpose() * Z +
      D1.transpose() * source->follower_p()->eval(s, regime) *
          p.sigma.at(s, regime);
  return -h.R1hat_inv * (h.S1hat * X + h.Xi * u2 + rho1hat);
}

FollowerReaction follower_reaction(const FollowerHatBlock& hat,
                                   const RegimeControl& u2, int steps,
                                   bool include_inhomogeneous) {
  const DerivedBlocks& src = *hat.source;
  if (src.reduced())
    throw UnsupportedError("follower reaction requires a primal problem");
  const ProblemData& p = src.problem();
  const int D = p.num_regimes;
  const int n = p.n;

  const auto breakpoints = p.breakpoints();
  const TimeGrid grid = TimeGrid::aligned(p.horizon, steps, breakpoints);

  MatState term(D);
  for (int i = 0; i < D; ++i)
    term[i] = include_inhomogeneous ? Eigen::VectorXd(p.m_term[i])
                                    : Eigen::VectorXd::Zero(n);

  auto rhs = [&](double s, double sp, const MatState& y) {
    MatState out(D);
    const Eigen::MatrixXd& rates = p.generator.rates(sp);
    for (int i = 1; i <= D; ++i) {
      const HatEval h = src.hat(s, sp, i);
      Eigen::VectorXd v = h.Ahat * y[i - 1] + h.Hhat * u2(sp, i);
      if (include_inhomogeneous) v += h.fhat;
      for (int k = 1; k <= D; ++k) v -= rates(i - 1, k - 1) * y[k - 1];
      out[i - 1] = v;
    }
    return out;
  };
  auto post = [&](int, double, MatState&) {};

  std::vector<MatState> nodes, derivs;
  detail::integrate_backward(grid, std::move(term), rhs, post, nodes, derivs);

  FollowerReaction r;
  r.y = from_matstate(grid, std::move(nodes), std::move(derivs));
  r.source = hat.source;
  return r;
}

}  // namespace rslq
