#include "rslq/convexity.hpp"

#include <cmath>
#include <thread>

#include "rslq/montecarlo.hpp"
#include "rslq/value.hpp"

namespace rslq {

namespace {

// Dynamics-only tables for homogeneous probe simulation; the equilibrium
// machinery is deliberately not involved so the probe can run before any
// Riccati solve.
struct ProbeTables {
  TimeGrid grid;
  int D = 0, n = 0, m1 = 0, m2 = 0;
  // [node][regime]
  std::vector<std::vector<Eigen::MatrixXd>> A, B1, B2, C, D1, D2, Q, R1, R2;
  std::vector<Eigen::MatrixXd> M;
};

ProbeTables build_probe_tables(const ProblemData& p, int steps) {
  ProbeTables t;
  t.grid = TimeGrid::aligned(p.horizon, steps, p.breakpoints());
  t.D = p.num_regimes;
  t.n = p.n;
  t.m1 = p.m1;
  t.m2 = p.m2;
  const int N = t.grid.cells;
  auto fill = [&](std::vector<std::vector<Eigen::MatrixXd>>& dst,
                  const PwcTable& src) {
    dst.resize(N + 1);
    for (int j = 0; j <= N; ++j) {
      const int cell = std::min(j, N - 1);
      const double sp = 0.5 * (t.grid.node(cell) + t.grid.node(cell + 1));
      dst[j].reserve(t.D);
      for (int i = 1; i <= t.D; ++i) dst[j].push_back(src.at(sp, i));
    }
  };
  fill(t.A, p.A);
  fill(t.B1, p.B1);
  fill(t.B2, p.B2);
  fill(t.C, p.C);
  fill(t.D1, p.D1);
  fill(t.D2, p.D2);
  fill(t.Q, p.Q);
  fill(t.R1, p.R1);
  fill(t.R2, p.R2);
  t.M = p.M;
  return t;
}

// J0 along one path for deterministic controls, x = 0, zero forcing.
double probe_cost(const ProbeTables& t, const std::vector<int>& regimes,
                  const std::vector<double>& dW,
                  const std::vector<std::vector<Eigen::VectorXd>>* u1,
                  const std::vector<std::vector<Eigen::VectorXd>>* u2) {
  const int N = t.grid.cells;
  const double h = t.grid.step;
  Eigen::VectorXd X = Eigen::VectorXd::Zero(t.n);
  const Eigen::VectorXd zero1 = Eigen::VectorXd::Zero(t.m1);
  const Eigen::VectorXd zero2 = Eigen::VectorXd::Zero(t.m2);
  double running = 0.0;
  for (int j = 0; j <= N; ++j) {
    const int i = regimes[j] - 1;
    const int cell = std::min(j, N - 1);
    const Eigen::VectorXd& a = u1 ? (*u1)[cell][i] : zero1;
    const Eigen::VectorXd& b = u2 ? (*u2)[cell][i] : zero2;
    const double w = (j == 0 || j == N) ? 0.5 : 1.0;
    running += w * (X.dot(t.Q[j][i] * X) + a.dot(t.R1[j][i] * a) +
                    b.dot(t.R2[j][i] * b));
    if (j < N)
      X += h * (t.A[j][i] * X + t.B1[j][i] * a + t.B2[j][i] * b) +
           dW[j] * (t.C[j][i] * X + t.D1[j][i] * a + t.D2[j][i] * b);
  }
  const int iT = regimes[N] - 1;
  return running * h + X.dot(t.M[iT] * X);
}

std::vector<int> node_regimes(const RegimePath& path, const TimeGrid& g) {
  std::vector<int> r(g.nodes());
  int state = path.initial;
  std::size_t k = 0;
  for (int j = 0; j <= g.cells; ++j) {
    const double s = g.node(j);
    while (k < path.jump_times.size() && path.jump_times[k] < s) {
      state = path.post_jump_states[k];
      ++k;
    }
    r[j] = state;
  }
  return r;
}

}  // namespace

ConvexityReport probe_convexity(std::shared_ptr<const ProblemData> p,
                                int num_probes, long long paths,
                                std::uint64_t seed, int steps, int workers) {
  if (p->is_reduced())
    throw UnsupportedError("probe_convexity requires a primal problem");
  if (num_probes < 1 || paths < 1)
    throw Error("probe_convexity: probe and path counts must be positive");
  const ProbeTables tables =
      build_probe_tables(*p, steps > 0 ? steps : p->grid_steps);
  const TimeGrid& g = tables.grid;
  const int D = p->num_regimes;

  ConvexityReport rep;
  rep.probes = num_probes;
  rep.min_u1_ratio = std::numeric_limits<double>::infinity();
  rep.max_u2_ratio = -std::numeric_limits<double>::infinity();

  RngStream dir_rng(seed, 0xDA7E);
  for (int probe = 0; probe < num_probes; ++probe) {
    const int i0 = 1 + probe % D;
    const auto v = random_direction(g, D, p->m1, i0, p->generator, dir_rng);
    const auto w = random_direction(g, D, p->m2, i0, p->generator, dir_rng);

    std::vector<double> cost1(paths), cost2(paths);
    auto chunk = [&](long long first, long long last) {
      RegimePath chain;
      std::vector<double> dW(g.cells);
      for (long long pt = first; pt < last; ++pt) {
        RngStream cs(seed, 4 * (static_cast<std::uint64_t>(probe) * paths + pt));
        RngStream gs(seed,
                     4 * (static_cast<std::uint64_t>(probe) * paths + pt) + 1);
        chain = simulate_chain(p->generator, i0, p->horizon, cs);
        const auto regimes = node_regimes(chain, g);
        const double sqh = std::sqrt(g.step);
        for (double& x : dW) x = sqh * gs.normal();
        cost1[pt] = probe_cost(tables, regimes, dW, &v, nullptr);
        cost2[pt] = probe_cost(tables, regimes, dW, nullptr, &w);
      }
    };
    if (workers <= 1 || paths < 2 * workers) {
      chunk(0, paths);
    } else {
      std::vector<std::thread> pool;
      const long long per = (paths + workers - 1) / workers;
      for (int t = 0; t < workers; ++t) {
        const long long first = t * per;
        const long long last = std::min<long long>(paths, first + per);
        if (first >= last) break;
        pool.emplace_back(chunk, first, last);
      }
      for (auto& t : pool) t.join();
    }

    auto stats = [&](const std::vector<double>& c) {
      double mean = 0.0;
      for (double x : c) mean += x;
      mean /= c.size();
      double ss = 0.0;
      for (double x : c) ss += (x - mean) * (x - mean);
      const double se =
          c.size() > 1 ? std::sqrt(ss / (c.size() - 1.0) / c.size()) : 0.0;
      return std::pair<double, double>(mean, se);
    };
    const auto [r1, se1] = stats(cost1);  // unit probe energy: ratio == J0
    const auto [r2, se2] = stats(cost2);
    rep.u1_rows.push_back({probe, i0, r1, se1});
    rep.u2_rows.push_back({probe, i0, r2, se2});
    if (r1 < rep.min_u1_ratio) {
      rep.min_u1_ratio = r1;
      rep.min_u1_ratio_se = se1;
    }
    if (r2 > rep.max_u2_ratio) {
      rep.max_u2_ratio = r2;
      rep.max_u2_ratio_se = se2;
    }
  }
  return rep;
}

}  // namespace rslq
