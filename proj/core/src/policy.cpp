#include "rslq/policy.hpp"

#include <cmath>

#include "rslq/linalg.hpp"
#include "rslq/riccati.hpp"

namespace rslq {

namespace {

PolicyNode build_node(const DerivedBlocks& src, const RiccatiSolution& Sigma,
                      const BackwardTable& phi, double s, double piece_time,
                      int i) {
  PolicyNode nd;
  const auto a = src.all(s, piece_time, i);
  const Eigen::MatrixXd& Si = Sigma.at_time(s, i);
  const Eigen::VectorXd& ph = phi.at_time(s, i);
  const SigmaOps ops =
      sigma_ops(Si, a.tilde, a.leader, a.hat, src.cond_ceiling(), s, i);

  const Eigen::MatrixXd That_invT = ops.That_inv.transpose();
  const Eigen::VectorXd rho1t = a.tilde.rho1tilde;
  const Eigen::MatrixXd& T22inv = a.leader.T22_inv;

  nd.u2A = T22inv * (ops.Hhat.transpose() -
                     a.leader.T21 * ops.That_inv * Si * ops.Fhat.transpose());
  nd.u2b = -T22inv * (a.leader.T21 * ops.That_inv *
                          (-Si * a.tilde.S1tilde * ph - Si * rho1t) +
                      a.leader.S2 * ph + a.leader.rho2);
  nd.upsA = T22inv * ops.Hhat.transpose();
  nd.upsb = -T22inv * (a.leader.S2 * ph + a.leader.rho2);
  nd.yA = -Si;
  nd.yb = ph;
  nd.zA = ops.That_inv * Si * ops.Fhat.transpose();
  nd.zb = ops.That_inv * (-Si * a.tilde.S1tilde * ph - Si * rho1t);

  nd.phi_driftA = -a.hat.Ahat.transpose() - a.leader.G * Si +
                  a.tilde.S1tilde.transpose() * ops.That_inv * Si *
                      ops.Fhat.transpose() +
                  a.leader.S2.transpose() * T22inv * ops.Hhat.transpose();
  nd.phi_driftb =
      -(a.tilde.S1tilde.transpose() * ops.That_inv * Si * a.tilde.S1tilde +
        a.leader.S2.transpose() * T22inv * a.leader.S2 - a.leader.G) *
          ph -
      a.tilde.S1tilde.transpose() * ops.That_inv * Si * rho1t -
      a.leader.S2.transpose() * T22inv * a.leader.rho2 + a.leader.q;
  nd.phi_diffA = -That_invT * ops.Fhat.transpose();
  nd.phi_diffb = That_invT * (a.tilde.S1tilde * ph + rho1t);

  nd.G = a.leader.G;
  nd.S1 = a.leader.S1;
  nd.S2 = a.leader.S2;
  nd.T11 = a.leader.T11;
  nd.T12 = a.leader.T12;
  nd.T21 = a.leader.T21;
  nd.T22 = a.leader.T22;
  nd.HhatT = a.hat.Hhat.transpose();
  nd.q = a.leader.q;
  nd.rho1 = a.leader.rho1;
  nd.rho2 = a.leader.rho2;

  const ProblemData& p = src.problem();
  if (!p.is_reduced()) {
    nd.u1Kx = -a.hat.R1hat_inv * a.hat.S1hat;
    nd.u1Ku2 = -a.hat.R1hat_inv * a.hat.Xi;
    nd.u1Ky = -a.hat.R1hat_inv * p.B1.at(piece_time, i).transpose();
    nd.u1Kz = -a.hat.R1hat_inv * p.D1.at(piece_time, i).transpose();
    nd.u1k0 = -a.hat.R1hat_inv * p.D1.at(piece_time, i).transpose() *
              src.follower_p()->at_time(s, i) * p.sigma.at(piece_time, i);
    nd.A = p.A.at(piece_time, i);
    nd.B1 = p.B1.at(piece_time, i);
    nd.B2 = p.B2.at(piece_time, i);
    nd.C = p.C.at(piece_time, i);
    nd.D1 = p.D1.at(piece_time, i);
    nd.D2 = p.D2.at(piece_time, i);
    nd.bvec = p.b.at(piece_time, i);
    nd.sig = p.sigma.at(piece_time, i);
    nd.Q = p.Q.at(piece_time, i);
    nd.R1 = p.R1.at(piece_time, i);
    nd.R2 = p.R2.at(piece_time, i);
  }
  return nd;
}

}  // namespace

EquilibriumPolicy EquilibriumPolicy::build(std::shared_ptr<const ProblemData> p,
                                           BuildOptions opts) {
  const int steps = opts.steps > 0 ? opts.steps : p->grid_steps;
  if (steps < 10) throw Error("equilibrium build: steps must be >= 10");

  EquilibriumPolicy pol;
  pol.problem_ = p;

  const TimeGrid base = TimeGrid::aligned(p->horizon, steps, p->breakpoints());
  const int N = base.cells;

  FollowerHatBlock hat;
  LeaderBlock lb;
  TildeBlock tb;
  if (p->is_reduced()) {
    ReducedBlockSet set = reduced_blocks(p, 2 * N, opts.cond_ceiling);
    hat = std::move(set.hat);
    lb = std::move(set.leader);
    tb = std::move(set.tilde);
  } else {
    // The follower solution is tabulated at 4x and the leader solution at 2x
    // the simulation resolution so that every RK4 stage time down the
    // pipeline evaluates exactly, without interpolating derived blocks.
    auto P = std::make_shared<RiccatiSolution>(
        solve_follower_cdre(p, 4 * N, opts.cond_ceiling));
    pol.P_ = P;
    hat = follower_hat(p, P, opts.cond_ceiling);
    lb = leader_block(hat);
    tb = tilde_block(lb);
  }
  pol.source_ = tb.source;

  pol.sigma_ = std::make_shared<RiccatiSolution>(
      solve_leader_cdre(tb, lb, hat, p->generator, 2 * N));
  pol.phi_ = solve_phi_bsde(tb, lb, hat, *pol.sigma_, p->generator, p->m_term,
                            N);

  pol.tables_.grid = base;
  pol.tables_.node.resize(N + 1);
  for (int j = 0; j <= N; ++j) {
    const double s = base.node(j);
    const int cell = std::min(j, N - 1);
    const double piece_time = 0.5 * (base.node(cell) + base.node(cell + 1));
    pol.tables_.node[j].reserve(p->num_regimes);
    for (int i = 1; i <= p->num_regimes; ++i)
      pol.tables_.node[j].push_back(
          build_node(*pol.source_, *pol.sigma_, pol.phi_, s, piece_time, i));
  }
  pol.tables_.M = p->M;
  pol.tables_.m_term = p->m_term;
  if (p->is_reduced()) {
    pol.tables_.M.assign(p->num_regimes,
                         Eigen::MatrixXd::Zero(p->n, p->n));
    pol.tables_.m_term = p->m_term;
  }
  return pol;
}

void EquilibriumPolicy::locate(double s, int& cell, double& w) const {
  const TimeGrid& g = tables_.grid;
  cell = g.cell_of(s);
  w = (s - g.node(cell)) / g.step;
  if (w < 0.0) w = 0.0;
  if (w > 1.0) w = 1.0;
}

Eigen::VectorXd EquilibriumPolicy::u2_star(
    double s, int regime, const Eigen::VectorXd& phi_star) const {
  int c;
  double w;
  locate(s, c, w);
  const PolicyNode& a = node_at(c, regime);
  const PolicyNode& b = node_at(c + 1, regime);
  return ((1 - w) * a.u2A + w * b.u2A) * phi_star + ((1 - w) * a.u2b + w * b.u2b);
}

Eigen::VectorXd EquilibriumPolicy::upsilon_star(
    double s, int regime, const Eigen::VectorXd& phi_star) const {
  int c;
  double w;
  locate(s, c, w);
  const PolicyNode& a = node_at(c, regime);
  const PolicyNode& b = node_at(c + 1, regime);
  return ((1 - w) * a.upsA + w * b.upsA) * phi_star +
         ((1 - w) * a.upsb + w * b.upsb);
}

EquilibriumPolicy::YZ EquilibriumPolicy::reconstruct_yz(
    double s, int regime, const Eigen::VectorXd& phi_star) const {
  int c;
  double w;
  locate(s, c, w);
  const PolicyNode& a = node_at(c, regime);
  const PolicyNode& b = node_at(c + 1, regime);
  YZ out;
  out.Y = ((1 - w) * a.yA + w * b.yA) * phi_star + ((1 - w) * a.yb + w * b.yb);
  out.Z = ((1 - w) * a.zA + w * b.zA) * phi_star + ((1 - w) * a.zb + w * b.zb);
  return out;
}

Eigen::VectorXd EquilibriumPolicy::gamma_jump(
    double s, int k, int regime_before, const Eigen::VectorXd& phi_star) const {
  const Eigen::MatrixXd dSigma =
      sigma_->eval(s, k) - sigma_->eval(s, regime_before);
  const Eigen::VectorXd dphi = phi_.eval(s, k) - phi_.eval(s, regime_before);
  return -dSigma * phi_star + dphi;
}

Eigen::VectorXd EquilibriumPolicy::u1_star(double s, int regime,
                                           const Eigen::VectorXd& X,
                                           const Eigen::VectorXd& u2,
                                           const Eigen::VectorXd& Y,
                                           const Eigen::VectorXd& Z) const {
  if (problem_->is_reduced())
    throw UnsupportedError("u1_star: reduced problems have no follower side");
  int c;
  double w;
  locate(s, c, w);
  const PolicyNode& a = node_at(c, regime);
  const PolicyNode& b = node_at(c + 1, regime);
  return ((1 - w) * a.u1Kx + w * b.u1Kx) * X +
         ((1 - w) * a.u1Ku2 + w * b.u1Ku2) * u2 +
         ((1 - w) * a.u1Ky + w * b.u1Ky) * Y +
         ((1 - w) * a.u1Kz + w * b.u1Kz) * Z +
         ((1 - w) * a.u1k0 + w * b.u1k0);
}

bool EquilibriumPolicy::phi_star_deterministic(double tol) const {
  const int D = problem_->num_regimes;
  for (const auto& row : tables_.node) {
    for (int i = 0; i < D; ++i) {
      if (row[i].phi_diffA.cwiseAbs().maxCoeff() > tol) return false;
      if (row[i].phi_diffb.size() &&
          row[i].phi_diffb.cwiseAbs().maxCoeff() > tol)
        return false;
      if (i > 0) {
        if ((row[i].phi_driftA - row[0].phi_driftA).cwiseAbs().maxCoeff() >
            tol)
          return false;
        if ((row[i].phi_driftb - row[0].phi_driftb).cwiseAbs().maxCoeff() >
            tol)
          return false;
      }
    }
  }
  return true;
}

std::vector<Eigen::VectorXd> EquilibriumPolicy::phi_star_deterministic_path(
    const Eigen::VectorXd& x) const {
  if (!phi_star_deterministic())
    throw UnsupportedError(
        "phi* is not deterministic for this problem (nonzero diffusion or "
        "regime-dependent drift)");
  const TimeGrid& g = tables_.grid;
  const int N = g.cells;
  std::vector<Eigen::VectorXd> out(N + 1);
  out[0] = -x;
  // RK4 with the drift maps interpolated linearly between nodes.
  auto drift = [&](double s, const Eigen::VectorXd& v) {
    int c;
    double w;
    locate(s, c, w);
    const PolicyNode& a = node_at(c, 1);
    const PolicyNode& b = node_at(c + 1, 1);
    return (((1 - w) * a.phi_driftA + w * b.phi_driftA) * v +
            ((1 - w) * a.phi_driftb + w * b.phi_driftb))
        .eval();
  };
  for (int j = 0; j < N; ++j) {
    const double s = g.node(j);
    const double h = g.step;
    const Eigen::VectorXd k1 = drift(s, out[j]);
    const Eigen::VectorXd k2 = drift(s + h / 2, out[j] + (h / 2) * k1);
    const Eigen::VectorXd k3 = drift(s + h / 2, out[j] + (h / 2) * k2);
    const Eigen::VectorXd k4 = drift(s + h, out[j] + h * k3);
    out[j + 1] = out[j] + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return out;
}

std::vector<int> EquilibriumPolicy::node_regimes(const RegimePath& path) const {
  const TimeGrid& g = tables_.grid;
  std::vector<int> r(g.nodes());
  int state = path.initial;
  std::size_t k = 0;
  for (int j = 0; j <= g.cells; ++j) {
    const double s = g.node(j);
    while (k < path.jump_times.size() && path.jump_times[k] < s) {
      state = path.post_jump_states[k];
      ++k;
    }
    r[j] = state;  // alpha(s_j-)
  }
  return r;
}

std::vector<Eigen::VectorXd> EquilibriumPolicy::simulate_phi_star(
    const RegimePath& path, std::span<const double> dW,
    const Eigen::VectorXd& x) const {
  const TimeGrid& g = tables_.grid;
  const int N = g.cells;
  if (static_cast<int>(dW.size()) != N)
    throw Error("simulate_phi_star: need one Brownian increment per cell");
  const std::vector<int> regimes = node_regimes(path);
  std::vector<Eigen::VectorXd> out(N + 1);
  out[0] = -x;
  for (int j = 0; j < N; ++j) {
    const PolicyNode& nd = node_at(j, regimes[j]);
    const Eigen::VectorXd drift = nd.phi_driftA * out[j] + nd.phi_driftb;
    const Eigen::VectorXd diff = nd.phi_diffA * out[j] + nd.phi_diffb;
    out[j + 1] = out[j] + g.step * drift + dW[j] * diff;
    if (!out[j + 1].allFinite())
      throw BlowupError("phi* simulation produced a non-finite state",
                        g.node(j));
  }
  return out;
}

}  // namespace rslq
