#include "rslq/value.hpp"

#include "rslq/linalg.hpp"

namespace rslq {

std::vector<Eigen::VectorXd> kolmogorov_forward(const Generator& g, int i0,
                                                const TimeGrid& grid) {
  const int D = g.num_regimes();
  std::vector<Eigen::VectorXd> out(grid.nodes());
  Eigen::VectorXd p = Eigen::VectorXd::Zero(D);
  p(i0 - 1) = 1.0;
  out[0] = p;
  for (int j = 0; j < grid.cells; ++j) {
    const double h = grid.step;
    const double sm = grid.node(j) + 0.5 * h;
    const Eigen::MatrixXd Lt = g.rates(sm).transpose();
    const Eigen::VectorXd k1 = Lt * p;
    const Eigen::VectorXd k2 = Lt * (p + (h / 2) * k1);
    const Eigen::VectorXd k3 = Lt * (p + (h / 2) * k2);
    const Eigen::VectorXd k4 = Lt * (p + h * k3);
    p += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
    out[j + 1] = p;
  }
  return out;
}

namespace {

double trapezoid(const TimeGrid& g, const std::vector<double>& f) {
  double sum = 0.5 * (f.front() + f.back());
  for (int j = 1; j < g.cells; ++j) sum += f[j];
  return sum * g.step;
}

}  // namespace

ValueReport value_functions(const EquilibriumPolicy& policy,
                            const Eigen::VectorXd& x, int i0) {
  const ProblemData& p = policy.problem();
  const DerivedBlocks& src = *policy.source();
  const TimeGrid& grid = policy.grid();
  const int D = p.num_regimes;
  const auto law = kolmogorov_forward(p.generator, i0, grid);

  ValueReport rep;

  // Leader value: boundary term plus the chain-expected integrand.
  {
    const Eigen::MatrixXd Sigma0 = policy.sigma().at_time(0.0, i0);
    const Eigen::VectorXd phi0 = policy.phi().at_time(0.0, i0);
    double vl = (Sigma0 * x + 2.0 * phi0).dot(-x);

    std::vector<double> f(grid.nodes(), 0.0);
    for (int j = 0; j < grid.nodes(); ++j) {
      const double s = grid.node(j);
      double val = 0.0;
      for (int i = 1; i <= D; ++i) {
        const auto a = src.all(s, i);
        const Eigen::MatrixXd& Si = policy.sigma().at_time(s, i);
        const Eigen::VectorXd& ph = policy.phi().at_time(s, i);
        const SigmaOps ops = sigma_ops(Si, a.tilde, a.leader, a.hat,
                                       src.cond_ceiling(), s, i);
        const Eigen::MatrixXd quad =
            a.tilde.S1tilde.transpose() * ops.That_inv * Si * a.tilde.S1tilde +
            a.leader.S2.transpose() * a.leader.T22_inv * a.leader.S2 -
            a.leader.G;
        const Eigen::VectorXd lin =
            -a.tilde.S1tilde.transpose() * ops.That_inv * Si *
                a.tilde.rho1tilde -
            a.leader.S2.transpose() * a.leader.T22_inv * a.leader.rho2 +
            a.leader.q;
        double g = -ph.dot(quad * ph) + 2.0 * ph.dot(lin) -
                   a.tilde.rho1tilde.dot(ops.That_inv * Si * a.tilde.rho1tilde) -
                   a.leader.rho2.dot(a.leader.T22_inv * a.leader.rho2);
        val += law[j](i - 1) * g;
      }
      f[j] = val;
    }
    rep.V_L = vl + trapezoid(grid, f);
  }

  if (!p.is_reduced()) {
    // Equilibrium value: -V_L plus the sigma-terms and the initial quadratic.
    const RiccatiSolution& P = *policy.follower_p();
    std::vector<double> f(grid.nodes(), 0.0);
    for (int j = 0; j < grid.nodes(); ++j) {
      const double s = grid.node(j);
      double val = 0.0;
      for (int i = 1; i <= D; ++i) {
        const HatEval h = src.hat(s, i);
        const Eigen::VectorXd sig = p.sigma.at(s, i);
        const Eigen::VectorXd Psig = P.at_time(s, i) * sig;
        const Eigen::VectorXd D1tPsig = p.D1.at(s, i).transpose() * Psig;
        val += law[j](i - 1) *
               (-D1tPsig.dot(h.R1hat_inv * D1tPsig) + Psig.dot(sig));
      }
      f[j] = val;
    }
    rep.V = -rep.V_L + trapezoid(grid, f) +
            x.dot(P.at_time(0.0, i0) * x);
    rep.v_available = true;

    if (policy.phi_star_deterministic()) {
      const auto phi_star = policy.phi_star_deterministic_path(x);
      std::vector<double> g(grid.nodes(), 0.0);
      for (int j = 0; j < grid.nodes(); ++j) {
        const double s = grid.node(j);
        double val = 0.0;
        for (int i = 1; i <= D; ++i) {
          const HatEval h = src.hat(s, i);
          const PolicyNode& nd = policy.tables().node[j][i - 1];
          const Eigen::VectorXd u2 = nd.u2A * phi_star[j] + nd.u2b;
          const Eigen::VectorXd Y = nd.yA * phi_star[j] + nd.yb;
          const Eigen::VectorXd Z = nd.zA * phi_star[j] + nd.zb;
          const Eigen::VectorXd sig = p.sigma.at(s, i);
          const Eigen::VectorXd Psig = P.at_time(s, i) * sig;
          const Eigen::VectorXd du = p.D2.at(s, i) * u2 + sig;
          const Eigen::VectorXd rho1hat =
              p.B1.at(s, i).transpose() * Y + p.D1.at(s, i).transpose() * Z +
              p.D1.at(s, i).transpose() * Psig;
          const Eigen::VectorXd bracket = rho1hat + h.Xi * u2;
          double term =
              2.0 * Y.dot(p.B2.at(s, i) * u2 + p.b.at(s, i)) +
              2.0 * Z.dot(du) + du.dot(P.at_time(s, i) * du) -
              bracket.dot(h.R1hat_inv * bracket);
          val += law[j](i - 1) * term;
        }
        g[j] = val;
      }
      const Eigen::VectorXd y0 =
          policy.sigma().at_time(0.0, i0) * x + policy.phi().at_time(0.0, i0);
      rep.V_F = trapezoid(grid, g) + x.dot(P.at_time(0.0, i0) * x) +
                2.0 * y0.dot(x);
      rep.v_f_available = true;
    }
  }
  return rep;
}

}  // namespace rslq
