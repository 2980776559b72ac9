#pragma once

#include <Eigen/Core>
#include <vector>

#include "rslq/errors.hpp"
#include "rslq/time_grid.hpp"

namespace rslq::detail {

using MatState = std::vector<Eigen::MatrixXd>;

inline void add_scaled(MatState& y, double a, const MatState& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

constexpr double kBlowupLimit = 1e12;

// Classic fixed-step RK4, backward from the terminal node. rhs is called as
// rhs(s_eval, piece_time, state); piece_time is the enclosing cell's
// midpoint, which lies strictly inside the cell so piecewise-constant
// coefficients resolve to the correct piece even when a stage time sits on a
// breakpoint. post(node, s, state) runs after every accepted step.
template <class Rhs, class Post>
void integrate_backward(const TimeGrid& g, MatState terminal, Rhs&& rhs,
                        Post&& post, std::vector<MatState>& nodes,
                        std::vector<MatState>& derivs) {
  const int N = g.cells;
  const double h = g.step;
  nodes.assign(N + 1, MatState());
  derivs.assign(N + 1, MatState());
  MatState v = std::move(terminal);
  post(N, g.horizon, v);
  nodes[N] = v;

  for (int j = N; j >= 1; --j) {
    const double s1 = g.node(j);
    const double s0 = g.node(j - 1);
    const double sm = 0.5 * (s0 + s1);

    MatState k1 = rhs(s1, sm, v);
    derivs[j] = k1;

    MatState tmp = v;
    add_scaled(tmp, -0.5 * h, k1);
    MatState k2 = rhs(sm, sm, tmp);

    tmp = v;
    add_scaled(tmp, -0.5 * h, k2);
    MatState k3 = rhs(sm, sm, tmp);

    tmp = v;
    add_scaled(tmp, -h, k3);
    MatState k4 = rhs(s0, sm, tmp);

    add_scaled(v, -h / 6.0, k1);
    add_scaled(v, -h / 3.0, k2);
    add_scaled(v, -h / 3.0, k3);
    add_scaled(v, -h / 6.0, k4);

    for (const auto& m : v) {
      if (!m.allFinite() || m.cwiseAbs().maxCoeff() > kBlowupLimit)
        throw BlowupError("backward integration blew up", s1);
    }
    post(j - 1, s0, v);
    nodes[j - 1] = v;
  }
  derivs[0] = rhs(0.0, 0.5 * g.step, nodes[0]);
}

// Fourth-order central difference of the node values against the recorded
// right-hand side, restricted to interior nodes away from breakpoints.
inline double max_ode_residual(const TimeGrid& g,
                               const std::vector<MatState>& nodes,
                               const std::vector<MatState>& derivs,
                               const std::vector<double>& breakpoints) {
  const int N = g.cells;
  if (N < 5) return 0.0;
  double worst = 0.0;
  for (int j = 2; j + 2 <= N; ++j) {
    const double s = g.node(j);
    bool near_break = false;
    for (double b : breakpoints)
      if (std::abs(s - b) < 2.5 * g.step) near_break = true;
    if (near_break) continue;
    for (std::size_t i = 0; i < nodes[j].size(); ++i) {
      const Eigen::MatrixXd stencil =
          (-nodes[j + 2][i] + 8.0 * nodes[j + 1][i] - 8.0 * nodes[j - 1][i] +
           nodes[j - 2][i]) /
          (12.0 * g.step);
      worst =
          std::max(worst, (stencil - derivs[j][i]).cwiseAbs().maxCoeff());
    }
  }
  return worst;
}

}  // namespace rslq::detail
