#include "rslq/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "rslq/linalg.hpp"
#include "rslq/value.hpp"

namespace rslq {

namespace {

void run_parallel(long long paths, int workers,
                  const std::function<void(long long, long long)>& chunk) {
  if (workers <= 1 || paths < 2 * workers) {
    chunk(0, paths);
    return;
  }
  std::vector<std::thread> pool;
  const long long per = (paths + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const long long first = w * per;
    const long long last = std::min(paths, first + per);
    if (first >= last) break;
    pool.emplace_back(chunk, first, last);
  }
  for (auto& t : pool) t.join();
}

// Mean and standard error over per-path values; NaN entries are excluded
// paths. More than 1% exclusions fails the run.
CostEstimate reduce(const std::vector<double>& vals, std::string tag) {
  long long kept = 0;
  double sum = 0.0;
  for (double v : vals)
    if (std::isfinite(v)) {
      sum += v;
      ++kept;
    }
  const long long excluded = static_cast<long long>(vals.size()) - kept;
  if (excluded * 100 > static_cast<long long>(vals.size()))
    throw BlowupError("more than 1% of paths were excluded (" +
                          std::to_string(excluded) + " of " +
                          std::to_string(vals.size()) + ")",
                      0.0);
  if (kept == 0) throw Error("estimate: no valid paths");
  const double mean = sum / kept;
  double ss = 0.0;
  for (double v : vals)
    if (std::isfinite(v)) ss += (v - mean) * (v - mean);
  CostEstimate est;
  est.mean = mean;
  est.se = kept > 1 ? std::sqrt(ss / (kept - 1.0)) / std::sqrt(double(kept))
                    : 0.0;
  est.paths = kept;
  est.tag = std::move(tag);
  return est;
}

struct PathCosts {
  double game = 0.0;
  double follower = 0.0;
  double leader = 0.0;
};

// ---------------------------------------------------------------------------
// Scalar kernel: flattened tables for one-dimensional problems. Index layout
// is [node * D + regime - 1]; directions use [cell * D + regime - 1].
// ---------------------------------------------------------------------------

struct ScalarPolicy {
  int N = 0, D = 0;
  double h = 0.0;
  bool reduced = false;
  std::vector<double> u2A, u2b, yA, yb, zA, zb, upsA, upsb, phA, phb, pdA, pdb;
  std::vector<double> kx, ku2, ky, kz, k0;
  std::vector<double> A, B1, B2, bv, C, D1, D2, sg, Q, R1, R2;
  std::vector<double> G, S1, S2, T11, T12, T21, T22, HT, rho2v, qv, rho1v;
  std::vector<double> M, mt;
};

bool scalar_applicable(const EquilibriumPolicy& pol) {
  const ProblemData& p = pol.problem();
  if (p.n != 1 || p.m2 != 1) return false;
  if (!p.is_reduced() && p.m1 != 1) return false;
  return true;
}

ScalarPolicy build_scalar(const EquilibriumPolicy& pol) {
  const ProblemData& p = pol.problem();
  const TimeGrid& g = pol.grid();
  ScalarPolicy sp;
  sp.N = g.cells;
  sp.D = p.num_regimes;
  sp.h = g.step;
  sp.reduced = p.is_reduced();
  const int total = (sp.N + 1) * sp.D;
  auto alloc = [&](std::vector<double>& v) { v.assign(total, 0.0); };
  alloc(sp.u2A); alloc(sp.u2b); alloc(sp.yA); alloc(sp.yb); alloc(sp.zA);
  alloc(sp.zb); alloc(sp.upsA); alloc(sp.upsb); alloc(sp.phA); alloc(sp.phb);
  alloc(sp.pdA); alloc(sp.pdb); alloc(sp.kx); alloc(sp.ku2); alloc(sp.ky);
  alloc(sp.kz); alloc(sp.k0); alloc(sp.A); alloc(sp.B1); alloc(sp.B2);
  alloc(sp.bv); alloc(sp.C); alloc(sp.D1); alloc(sp.D2); alloc(sp.sg);
  alloc(sp.Q); alloc(sp.R1); alloc(sp.R2); alloc(sp.G); alloc(sp.S1);
  alloc(sp.S2); alloc(sp.T11); alloc(sp.T12); alloc(sp.T21); alloc(sp.T22);
  alloc(sp.HT); alloc(sp.rho2v); alloc(sp.qv); alloc(sp.rho1v);
  sp.M.assign(sp.D, 0.0);
  sp.mt.assign(sp.D, 0.0);

  for (int j = 0; j <= sp.N; ++j) {
    for (int i = 0; i < sp.D; ++i) {
      const PolicyNode& nd = pol.tables().node[j][i];
      const int k = j * sp.D + i;
      sp.u2A[k] = nd.u2A(0, 0);
      sp.u2b[k] = nd.u2b(0);
      sp.yA[k] = nd.yA(0, 0);
      sp.yb[k] = nd.yb(0);
      sp.zA[k] = nd.zA(0, 0);
      sp.zb[k] = nd.zb(0);
      sp.upsA[k] = nd.upsA(0, 0);
      sp.upsb[k] = nd.upsb(0);
      sp.phA[k] = nd.phi_driftA(0, 0);
      sp.phb[k] = nd.phi_driftb(0);
      sp.pdA[k] = nd.phi_diffA(0, 0);
      sp.pdb[k] = nd.phi_diffb(0);
      sp.G[k] = nd.G(0, 0);
      sp.S1[k] = nd.S1(0, 0);
      sp.S2[k] = nd.S2(0, 0);
      sp.T11[k] = nd.T11(0, 0);
      sp.T12[k] = nd.T12(0, 0);
      sp.T21[k] = nd.T21(0, 0);
      sp.T22[k] = nd.T22(0, 0);
      sp.HT[k] = nd.HhatT(0, 0);
      sp.rho2v[k] = nd.rho2(0);
      sp.qv[k] = nd.q(0);
      sp.rho1v[k] = nd.rho1(0);
      if (!sp.reduced) {
        sp.kx[k] = nd.u1Kx(0, 0);
        sp.ku2[k] = nd.u1Ku2(0, 0);
        sp.ky[k] = nd.u1Ky(0, 0);
        sp.kz[k] = nd.u1Kz(0, 0);
        sp.k0[k] = nd.u1k0(0);
        sp.A[k] = nd.A(0, 0);
        sp.B1[k] = nd.B1(0, 0);
        sp.B2[k] = nd.B2(0, 0);
        sp.bv[k] = nd.bvec(0);
        sp.C[k] = nd.C(0, 0);
        sp.D1[k] = nd.D1(0, 0);
        sp.D2[k] = nd.D2(0, 0);
        sp.sg[k] = nd.sig(0);
        sp.Q[k] = nd.Q(0, 0);
        sp.R1[k] = nd.R1(0, 0);
        sp.R2[k] = nd.R2(0, 0);
      }
    }
  }
  for (int i = 0; i < sp.D; ++i) {
    sp.M[i] = pol.tables().M[i](0, 0);
    sp.mt[i] = pol.tables().m_term[i](0);
  }
  return sp;
}

struct ScalarWorkspace {
  std::vector<int> r;
  std::vector<double> dW;
  std::vector<double> phi, X, u1, u2, Y, Z;
  void resize(int N) {
    r.resize(N + 1);
    dW.resize(N);
    phi.resize(N + 1);
    X.resize(N + 1);
    u1.resize(N + 1);
    u2.resize(N + 1);
    Y.resize(N + 1);
    Z.resize(N + 1);
  }
};

void sample_noise(const EquilibriumPolicy& pol, std::uint64_t seed,
                  long long idx, RegimePath& chain, std::vector<int>& regimes,
                  std::vector<double>& dW) {
  RngStream chain_stream(seed, 2 * static_cast<std::uint64_t>(idx));
  RngStream gauss_stream(seed, 2 * static_cast<std::uint64_t>(idx) + 1);
  chain = simulate_chain(pol.problem().generator, pol.problem().i0,
                         pol.problem().horizon, chain_stream);
  regimes = pol.node_regimes(chain);
  const double sqh = std::sqrt(pol.grid().step);
  dW.resize(pol.grid().cells);
  for (double& w : dW) w = sqh * gauss_stream.normal();
}

// Equilibrium pass: fills phi/X/u1/u2/Y/Z and returns all three functionals.
PathCosts scalar_equilibrium(const ScalarPolicy& sp, ScalarWorkspace& ws,
                             double x) {
  const int N = sp.N, D = sp.D;
  const double h = sp.h;
  double running_g = 0.0, running_f = 0.0, running_l = 0.0;
  double ph = -x, X = sp.reduced ? 0.0 : x;
  for (int j = 0; j <= N; ++j) {
    const int k = j * D + (ws.r[j] - 1);
    const double u2 = sp.u2A[k] * ph + sp.u2b[k];
    const double Y = sp.yA[k] * ph + sp.yb[k];
    const double Z = sp.zA[k] * ph + sp.zb[k];
    double u1 = 0.0;
    if (!sp.reduced)
      u1 = sp.kx[k] * X + sp.ku2[k] * u2 + sp.ky[k] * Y + sp.kz[k] * Z +
           sp.k0[k];
    ws.phi[j] = ph;
    ws.X[j] = X;
    ws.u1[j] = u1;
    ws.u2[j] = u2;
    ws.Y[j] = Y;
    ws.Z[j] = Z;

    const double wq = (j == 0 || j == N) ? 0.5 : 1.0;
    if (!sp.reduced) {
      const double f_f = sp.Q[k] * X * X + sp.R1[k] * u1 * u1;
      running_f += wq * f_f;
      running_g += wq * (f_f + sp.R2[k] * u2 * u2);
    }
    running_l += wq * (sp.G[k] * Y * Y + 2.0 * sp.S1[k] * Y * Z +
                       2.0 * sp.S2[k] * Y * u2 + sp.T11[k] * Z * Z +
                       2.0 * sp.T12[k] * Z * u2 + sp.T22[k] * u2 * u2 +
                       2.0 * (sp.qv[k] * Y + sp.rho1v[k] * Z +
                              sp.rho2v[k] * u2));

    if (j < N) {
      ph += h * (sp.phA[k] * ph + sp.phb[k]) +
            ws.dW[j] * (sp.pdA[k] * ph + sp.pdb[k]);
      if (!sp.reduced)
        X += h * (sp.A[k] * X + sp.B1[k] * u1 + sp.B2[k] * u2 + sp.bv[k]) +
             ws.dW[j] *
                 (sp.C[k] * X + sp.D1[k] * u1 + sp.D2[k] * u2 + sp.sg[k]);
      if (!std::isfinite(ph) || !std::isfinite(X))
        throw BlowupError("path state became non-finite", j * h);
    }
  }
  PathCosts c;
  const int rT = ws.r[N] - 1;
  const double XT = ws.X[N];
  if (!sp.reduced) {
    const double terminal = sp.M[rT] * XT * XT + 2.0 * sp.mt[rT] * XT;
    c.game = running_g * h + terminal;
    c.follower = running_f * h + terminal;
  }
  const int k0i = 0 * D + (ws.r[0] - 1);
  const double Y0 = sp.yA[k0i] * (-x) + sp.yb[k0i];
  c.leader = running_l * h - 2.0 * Y0 * x;
  return c;
}

// Replay with overridden controls on the recorded noise. u1_mode/u2_mode:
// 0 keep recorded, 1 recorded + eps*dir, 2 fresh feedback (leader probe),
// 3 deterministic table, 4 zero.
struct ScalarReplay {
  int u1_mode = 0, u2_mode = 0;
  double eps = 0.0;
  const std::vector<double>* u1_dir = nullptr;  // [cell*D + i]
  const std::vector<double>* u2_dir = nullptr;
  const std::vector<double>* y_shift = nullptr;  // [node*D + i] (leader probe)
  const std::vector<double>* u1_tab = nullptr;   // [node*D + i]
  const std::vector<double>* u2_tab = nullptr;
  bool homogeneous = false;
};

PathCosts scalar_replay(const ScalarPolicy& sp, const ScalarWorkspace& ws,
                        const ScalarReplay& rp, double x) {
  const int N = sp.N, D = sp.D;
  const double h = sp.h;
  const double inh = rp.homogeneous ? 0.0 : 1.0;
  double running_g = 0.0, running_f = 0.0;
  double X = x;
  for (int j = 0; j <= N; ++j) {
    const int i = ws.r[j] - 1;
    const int k = j * D + i;
    const int kc = std::min(j, N - 1) * D + i;

    double u2;
    switch (rp.u2_mode) {
      case 1: u2 = ws.u2[j] + rp.eps * (*rp.u2_dir)[kc]; break;
      case 3: u2 = (*rp.u2_tab)[k]; break;
      case 4: u2 = 0.0; break;
      default: u2 = ws.u2[j]; break;
    }
    double u1;
    switch (rp.u1_mode) {
      case 1: u1 = ws.u1[j] + rp.eps * (*rp.u1_dir)[kc]; break;
      case 2: {
        const double Ye = ws.Y[j] + rp.eps * (*rp.y_shift)[k];
        u1 = sp.kx[k] * X + sp.ku2[k] * u2 + sp.ky[k] * Ye +
             sp.kz[k] * ws.Z[j] + sp.k0[k];
        break;
      }
      case 3: u1 = (*rp.u1_tab)[k]; break;
      case 4: u1 = 0.0; break;
      default: u1 = ws.u1[j]; break;
    }

    const double wq = (j == 0 || j == N) ? 0.5 : 1.0;
    const double f_f = sp.Q[k] * X * X + sp.R1[k] * u1 * u1;
    running_f += wq * f_f;
    running_g += wq * (f_f + sp.R2[k] * u2 * u2);

    if (j < N) {
      X += h * (sp.A[k] * X + sp.B1[k] * u1 + sp.B2[k] * u2 +
                inh * sp.bv[k]) +
           ws.dW[j] * (sp.C[k] * X + sp.D1[k] * u1 + sp.D2[k] * u2 +
                       inh * sp.sg[k]);
      if (!std::isfinite(X))
        throw BlowupError("path state became non-finite", j * h);
    }
  }
  const int rT = ws.r[N] - 1;
  const double terminal =
      sp.M[rT] * X * X + 2.0 * inh * sp.mt[rT] * X;
  PathCosts c;
  c.game = running_g * h + terminal;
  c.follower = running_f * h + terminal;
  return c;
}

// ---------------------------------------------------------------------------
// Generic kernel (any dimensions), used for recording runs, reduced problems
// of dimension > 1 and as the fallback for mixed control specifications.
// ---------------------------------------------------------------------------

struct GenericWorkspace {
  RegimePath chain;
  std::vector<int> r;
  std::vector<double> dW;
  std::vector<Eigen::VectorXd> phi, X, u1, u2, ups, Y, Z;
};

struct GenericRunSpec {
  // control sources
  const ControlSpec* u1 = nullptr;  // null: equilibrium feedback
  const ControlSpec* u2 = nullptr;  // null: equilibrium
  bool homogeneous = false;
  bool record = false;
  double u2_offset = 0.0;          // stationarity sensitivity check
  double* stat_max = nullptr;      // stationarity accumulators
  double* stat_sum = nullptr;
  long long* stat_count = nullptr;
};

PathCosts run_generic(const EquilibriumPolicy& pol, GenericWorkspace& ws,
                      const Eigen::VectorXd& x, const GenericRunSpec& spec) {
  const ProblemData& p = pol.problem();
  const TimeGrid& g = pol.grid();
  const int N = g.cells;
  const double h = g.step;
  const bool reduced = p.is_reduced();
  const double inh = spec.homogeneous ? 0.0 : 1.0;

  const bool u1_eq = !spec.u1 || spec.u1->kind == ControlSpec::Kind::equilibrium;
  const bool u2_eq = !spec.u2 || spec.u2->kind == ControlSpec::Kind::equilibrium;
  const bool need_phi = u1_eq || u2_eq || reduced;

  if (spec.record) {
    ws.phi.resize(N + 1);
    ws.X.resize(N + 1);
    ws.u1.resize(N + 1);
    ws.u2.resize(N + 1);
    ws.ups.resize(N + 1);
    ws.Y.resize(N + 1);
    ws.Z.resize(N + 1);
  }

  double running_g = 0.0, running_f = 0.0, running_l = 0.0;
  Eigen::VectorXd ph = -x;
  Eigen::VectorXd X = reduced ? Eigen::VectorXd() : x;
  Eigen::VectorXd Y0;
  for (int j = 0; j <= N; ++j) {
    const int i = ws.r[j];
    const PolicyNode& nd = pol.tables().node[j][i - 1];
    const double s = g.node(j);

    Eigen::VectorXd u2;
    if (u2_eq)
      u2 = nd.u2A * ph + nd.u2b;
    else if (spec.u2->kind == ControlSpec::Kind::deterministic)
      u2 = spec.u2->fn(s, i);
    else
      u2 = Eigen::VectorXd::Zero(p.m2);

    Eigen::VectorXd Y, Z;
    if (need_phi) {
      Y = nd.yA * ph + nd.yb;
      Z = nd.zA * ph + nd.zb;
      if (j == 0) Y0 = Y;
    }

    Eigen::VectorXd u1;
    if (!reduced) {
      if (u1_eq)
        u1 = nd.u1Kx * X + nd.u1Ku2 * u2 + nd.u1Ky * Y + nd.u1Kz * Z + nd.u1k0;
      else if (spec.u1->kind == ControlSpec::Kind::deterministic)
        u1 = spec.u1->fn(s, i);
      else
        u1 = Eigen::VectorXd::Zero(p.m1);
    }

    if (spec.stat_max) {
      const Eigen::VectorXd u2s =
          u2.array() + spec.u2_offset;
      const Eigen::VectorXd res = -nd.HhatT * ph + nd.S2 * Y + nd.T21 * Z +
                                  nd.T22 * u2s + nd.rho2;
      const double r = res.cwiseAbs().maxCoeff();
      *spec.stat_max = std::max(*spec.stat_max, r);
      *spec.stat_sum += r;
      ++*spec.stat_count;
    }

    if (spec.record) {
      ws.phi[j] = ph;
      if (!reduced) ws.X[j] = X;
      if (!reduced) ws.u1[j] = u1;
      ws.u2[j] = u2;
      ws.ups[j] = nd.upsA * ph + nd.upsb;
      if (need_phi) {
        ws.Y[j] = Y;
        ws.Z[j] = Z;
      }
    }

    const double wq = (j == 0 || j == N) ? 0.5 : 1.0;
    if (!reduced) {
      const double f_f = X.dot(nd.Q * X) + u1.dot(nd.R1 * u1);
      running_f += wq * f_f;
      running_g += wq * (f_f + u2.dot(nd.R2 * u2));
    }
    if (need_phi)
      running_l +=
          wq * (Y.dot(nd.G * Y) + 2.0 * Y.dot(nd.S1.transpose() * Z) +
                2.0 * Y.dot(nd.S2.transpose() * u2) + Z.dot(nd.T11 * Z) +
                2.0 * Z.dot(nd.T12 * u2) + u2.dot(nd.T22 * u2) +
                2.0 * (nd.q.dot(Y) + nd.rho1.dot(Z) + nd.rho2.dot(u2)));

    if (j < N) {
      if (need_phi) {
        const Eigen::VectorXd drift = nd.phi_driftA * ph + nd.phi_driftb;
        const Eigen::VectorXd diff = nd.phi_diffA * ph + nd.phi_diffb;
        ph += h * drift + ws.dW[j] * diff;
      }
      if (!reduced) {
        X += h * (nd.A * X + nd.B1 * u1 + nd.B2 * u2 + inh * nd.bvec) +
             ws.dW[j] *
                 (nd.C * X + nd.D1 * u1 + nd.D2 * u2 + inh * nd.sig);
        if (!X.allFinite())
          throw BlowupError("path state became non-finite", s);
      }
      if (need_phi && !ph.allFinite())
        throw BlowupError("adjoint state became non-finite", s);
    }
  }

  PathCosts c;
  if (!reduced) {
    const int rT = ws.r[N] - 1;
    const double terminal =
        X.dot(pol.tables().M[rT] * X) +
        2.0 * inh * pol.tables().m_term[rT].dot(X);
    c.game = running_g * h + terminal;
    c.follower = running_f * h + terminal;
  }
  if (need_phi) c.leader = running_l * h - 2.0 * Y0.dot(x);
  return c;
}

std::vector<double> tabulate_control(const EquilibriumPolicy& pol,
                                     const RegimeControl& fn) {
  const TimeGrid& g = pol.grid();
  const int D = pol.problem().num_regimes;
  std::vector<double> tab((g.cells + 1) * D, 0.0);
  for (int j = 0; j <= g.cells; ++j)
    for (int i = 1; i <= D; ++i) {
      const Eigen::VectorXd v = fn(g.node(j), i);
      tab[j * D + i - 1] = v(0);
    }
  return tab;
}

}  // namespace

std::vector<PathBundle> simulate_closed_loop(const EquilibriumPolicy& policy,
                                             const McOptions& opts) {
  std::vector<PathBundle> bundles(opts.paths);
  std::vector<double> costs(opts.paths,
                            std::numeric_limits<double>::quiet_NaN());
  auto chunk = [&](long long first, long long last) {
    GenericWorkspace ws;
    for (long long p = first; p < last; ++p) {
      sample_noise(policy, opts.seed, p, ws.chain, ws.r, ws.dW);
      GenericRunSpec spec;
      spec.record = true;
      try {
        const PathCosts c = run_generic(policy, ws, policy.problem().x0, spec);
        PathBundle& b = bundles[p];
        b.chain = ws.chain;
        b.dW = ws.dW;
        b.phi_star = ws.phi;
        b.X = ws.X;
        b.u1 = ws.u1;
        b.u2 = ws.u2;
        b.ups = ws.ups;
        b.Y = ws.Y;
        b.Z = ws.Z;
        b.cost = policy.problem().is_reduced() ? c.leader : c.game;
        b.path_index = p;
        costs[p] = b.cost;
      } catch (const BlowupError&) {
        costs[p] = std::numeric_limits<double>::quiet_NaN();
      }
    }
  };
  run_parallel(opts.paths, opts.workers, chunk);
  reduce(costs, "J");  // enforce the exclusion budget
  return bundles;
}

CostEstimate estimate_cost(const EquilibriumPolicy& policy,
                           const ControlSpec& u1, const ControlSpec& u2,
                           const Eigen::VectorXd& x, int i0,
                           const McOptions& opts, CostFunctional functional,
                           bool homogeneous) {
  if (policy.problem().is_reduced() && functional != CostFunctional::leader_reduced)
    throw UnsupportedError(
        "estimate_cost: reduced problems only carry the reduced leader "
        "functional");
  if (homogeneous && (u1.kind == ControlSpec::Kind::equilibrium ||
                      u2.kind == ControlSpec::Kind::equilibrium))
    throw UnsupportedError(
        "estimate_cost: the homogeneous functional requires explicit "
        "control specifications");
  if (i0 != policy.problem().i0)
    throw UnsupportedError(
        "estimate_cost: the initial regime is fixed by the problem data");

  const bool both_eq = u1.kind == ControlSpec::Kind::equilibrium &&
                       u2.kind == ControlSpec::Kind::equilibrium;
  const bool no_eq = u1.kind != ControlSpec::Kind::equilibrium &&
                     u2.kind != ControlSpec::Kind::equilibrium;
  const bool scalar = scalar_applicable(policy) && (both_eq || no_eq) &&
                      !policy.problem().is_reduced();

  std::vector<double> vals(opts.paths,
                           std::numeric_limits<double>::quiet_NaN());
  const std::string tag = functional == CostFunctional::game
                              ? "J"
                              : (functional == CostFunctional::follower
                                     ? "J_F"
                                     : "J_L");

  if (scalar) {
    const ScalarPolicy sp = build_scalar(policy);
    std::vector<double> u1tab, u2tab;
    if (u1.kind == ControlSpec::Kind::deterministic)
      u1tab = tabulate_control(policy, u1.fn);
    if (u2.kind == ControlSpec::Kind::deterministic)
      u2tab = tabulate_control(policy, u2.fn);
    auto chunk = [&](long long first, long long last) {
      ScalarWorkspace ws;
      ws.resize(sp.N);
      RegimePath chain;
      for (long long p = first; p < last; ++p) {
        sample_noise(policy, opts.seed, p, chain, ws.r, ws.dW);
        try {
          PathCosts c;
          if (both_eq) {
            c = scalar_equilibrium(sp, ws, x(0));
          } else {
            ScalarReplay rp;
            rp.homogeneous = homogeneous;
            rp.u1_mode = u1.kind == ControlSpec::Kind::zero ? 4 : 3;
            rp.u2_mode = u2.kind == ControlSpec::Kind::zero ? 4 : 3;
            rp.u1_tab = &u1tab;
            rp.u2_tab = &u2tab;
            c = scalar_replay(sp, ws, rp, x(0));
          }
          vals[p] = functional == CostFunctional::game
                        ? c.game
                        : (functional == CostFunctional::follower ? c.follower
                                                                  : c.leader);
        } catch (const BlowupError&) {
        }
      }
    };
    run_parallel(opts.paths, opts.workers, chunk);
    return reduce(vals, tag);
  }

  auto chunk = [&](long long first, long long last) {
    GenericWorkspace ws;
    for (long long p = first; p < last; ++p) {
      sample_noise(policy, opts.seed, p, ws.chain, ws.r, ws.dW);
      GenericRunSpec spec;
      spec.u1 = &u1;
      spec.u2 = &u2;
      spec.homogeneous = homogeneous;
      try {
        const PathCosts c = run_generic(policy, ws, x, spec);
        vals[p] = functional == CostFunctional::game
                      ? c.game
                      : (functional == CostFunctional::follower ? c.follower
                                                                : c.leader);
      } catch (const BlowupError&) {
      }
    }
  };
  run_parallel(opts.paths, opts.workers, chunk);
  return reduce(vals, tag);
}

CostEstimate estimate_cost_difference(const EquilibriumPolicy& policy,
                                      const ControlSpec& u1a,
                                      const ControlSpec& u2a,
                                      const ControlSpec& u1b,
                                      const ControlSpec& u2b,
                                      const Eigen::VectorXd& x, int i0,
                                      const McOptions& opts, bool paired) {
  if (!paired) {
    McOptions other = opts;
    other.seed = opts.seed + 0x9E3779B97F4A7C15ULL;
    const CostEstimate a = estimate_cost(policy, u1a, u2a, x, i0, opts);
    const CostEstimate b = estimate_cost(policy, u1b, u2b, x, i0, other);
    CostEstimate d;
    d.mean = a.mean - b.mean;
    d.se = std::sqrt(a.se * a.se + b.se * b.se);
    d.paths = std::min(a.paths, b.paths);
    d.tag = "dJ";
    return d;
  }
  std::vector<double> vals(opts.paths,
                           std::numeric_limits<double>::quiet_NaN());
  auto chunk = [&](long long first, long long last) {
    GenericWorkspace ws;
    for (long long p = first; p < last; ++p) {
      sample_noise(policy, opts.seed, p, ws.chain, ws.r, ws.dW);
      GenericRunSpec sa, sb;
      sa.u1 = &u1a;
      sa.u2 = &u2a;
      sb.u1 = &u1b;
      sb.u2 = &u2b;
      try {
        const double a = run_generic(policy, ws, x, sa).game;
        const double b = run_generic(policy, ws, x, sb).game;
        vals[p] = a - b;
      } catch (const BlowupError&) {
      }
    }
  };
  run_parallel(opts.paths, opts.workers, chunk);
  return reduce(vals, "dJ");
}

CostEstimate estimate_leader_cost(const EquilibriumPolicy& policy,
                                  const Eigen::VectorXd& x, int i0,
                                  const McOptions& opts) {
  if (i0 != policy.problem().i0)
    throw UnsupportedError(
        "estimate_leader_cost: the initial regime is fixed by the problem");
  std::vector<double> vals(opts.paths,
                           std::numeric_limits<double>::quiet_NaN());
  auto chunk = [&](long long first, long long last) {
    GenericWorkspace ws;
    for (long long p = first; p < last; ++p) {
      sample_noise(policy, opts.seed, p, ws.chain, ws.r, ws.dW);
      GenericRunSpec spec;
      try {
        vals[p] = run_generic(policy, ws, x, spec).leader;
      } catch (const BlowupError&) {
      }
    }
  };
  run_parallel(opts.paths, opts.workers, chunk);
  return reduce(vals, "J_L");
}

StationarityReport stationarity_residual(const EquilibriumPolicy& policy,
                                         const McOptions& opts,
                                         double u2_offset) {
  StationarityReport rep;
  std::vector<double> maxima(opts.paths, 0.0);
  std::vector<double> sums(opts.paths, 0.0);
  std::vector<long long> counts(opts.paths, 0);
  auto chunk = [&](long long first, long long last) {
    GenericWorkspace ws;
    for (long long p = first; p < last; ++p) {
      sample_noise(policy, opts.seed, p, ws.chain, ws.r, ws.dW);
      GenericRunSpec spec;
      spec.u2_offset = u2_offset;
      spec.stat_max = &maxima[p];
      spec.stat_sum = &sums[p];
      spec.stat_count = &counts[p];
      run_generic(policy, ws, policy.problem().x0, spec);
    }
  };
  run_parallel(opts.paths, opts.workers, chunk);
  double total = 0.0;
  long long n = 0;
  for (long long p = 0; p < opts.paths; ++p) {
    rep.max_residual = std::max(rep.max_residual, maxima[p]);
    total += sums[p];
    n += counts[p];
  }
  rep.mean_residual = n ? total / n : 0.0;
  rep.paths = opts.paths;
  return rep;
}

std::vector<std::vector<Eigen::VectorXd>> random_direction(
    const TimeGrid& grid, int num_regimes, int dim, int i0,
    const Generator& gen, RngStream& rng) {
  const auto law = kolmogorov_forward(gen, i0, grid);
  std::vector<std::vector<Eigen::VectorXd>> dir(
      grid.cells, std::vector<Eigen::VectorXd>(num_regimes));
  for (int redraw = 0; redraw < 100; ++redraw) {
    double energy = 0.0;
    for (int c = 0; c < grid.cells; ++c) {
      for (int i = 0; i < num_regimes; ++i) {
        Eigen::VectorXd v(dim);
        for (int k = 0; k < dim; ++k) v(k) = rng.normal();
        dir[c][i] = v;
        const double w =
            0.5 * grid.step * (law[c](i) + law[c + 1](i));
        energy += w * v.squaredNorm();
      }
    }
    if (energy > 1e-12) {
      const double scale = 1.0 / std::sqrt(energy);
      for (auto& row : dir)
        for (auto& v : row) v *= scale;
      return dir;
    }
  }
  throw Error("random_direction: degenerate probe after 100 redraws");
}

SaddleReport saddle_probe(const EquilibriumPolicy& policy, double eps,
                          int directions, const McOptions& opts) {
  if (policy.problem().is_reduced())
    throw UnsupportedError("saddle_probe requires a primal problem");
  if (!scalar_applicable(policy))
    throw UnsupportedError(
        "saddle_probe is implemented for one-dimensional problems");
  const ProblemData& p = policy.problem();
  const TimeGrid& g = policy.grid();
  const int D = p.num_regimes;
  const int N = g.cells;

  SaddleReport rep;
  rep.eps = eps;
  rep.paths = opts.paths;

  // Directions and the deterministic linear parts of the leader reaction.
  RngStream dir_rng(opts.seed, 0xD1CE);
  std::vector<std::vector<double>> vdir(directions), wdir(directions),
      yshift(directions);
  {
    // One homogeneous reaction solve per leader direction: the adjoint shift
    // for u2 -> u2 + eps*w is eps times this table.
    auto P = policy.follower_p_ptr();
    FollowerHatBlock hat = follower_hat(policy.problem_ptr(), P);
    for (int d = 0; d < directions; ++d) {
      auto v =
          random_direction(g, D, p.m1, p.i0, p.generator, dir_rng);
      auto w =
          random_direction(g, D, p.m2, p.i0, p.generator, dir_rng);
      vdir[d].assign(N * D, 0.0);
      wdir[d].assign(N * D, 0.0);
      for (int c = 0; c < N; ++c)
        for (int i = 0; i < D; ++i) {
          vdir[d][c * D + i] = v[c][i](0);
          wdir[d][c * D + i] = w[c][i](0);
        }
      RegimeControl wfn = cell_control(g, w);
      FollowerReaction lin = follower_reaction(hat, wfn, N, false);
      yshift[d].assign((N + 1) * D, 0.0);
      for (int j = 0; j <= N; ++j)
        for (int i = 1; i <= D; ++i)
          yshift[d][j * D + i - 1] = lin.y.at_node(
              lin.y.grid.node_index(g.node(j), 1e-9), i)(0);
    }
  }

  const ScalarPolicy sp = build_scalar(policy);
  const double x = p.x0(0);

  // Per-direction per-path paired differences.
  std::vector<std::vector<double>> fdiff(directions), fdiff2(directions),
      ldiff(directions);
  for (int d = 0; d < directions; ++d) {
    fdiff[d].assign(opts.paths, std::numeric_limits<double>::quiet_NaN());
    fdiff2[d].assign(opts.paths, std::numeric_limits<double>::quiet_NaN());
    ldiff[d].assign(opts.paths, std::numeric_limits<double>::quiet_NaN());
  }

  auto chunk = [&](long long first, long long last) {
    ScalarWorkspace ws;
    ws.resize(N);
    RegimePath chain;
    for (long long pth = first; pth < last; ++pth) {
      sample_noise(policy, opts.seed, pth, chain, ws.r, ws.dW);
      double j0;
      try {
        j0 = scalar_equilibrium(sp, ws, x).game;
      } catch (const BlowupError&) {
        continue;
      }
      for (int d = 0; d < directions; ++d) {
        try {
          ScalarReplay rf;
          rf.u1_mode = 1;
          rf.eps = eps;
          rf.u1_dir = &vdir[d];
          fdiff[d][pth] = scalar_replay(sp, ws, rf, x).game - j0;
          rf.eps = 2.0 * eps;
          fdiff2[d][pth] = scalar_replay(sp, ws, rf, x).game - j0;

          ScalarReplay rl;
          rl.u1_mode = 2;
          rl.u2_mode = 1;
          rl.eps = eps;
          rl.u2_dir = &wdir[d];
          rl.y_shift = &yshift[d];
          ldiff[d][pth] = scalar_replay(sp, ws, rl, x).game - j0;
        } catch (const BlowupError&) {
        }
      }
    }
  };
  run_parallel(opts.paths, opts.workers, chunk);

  double agg_eps = 0.0, agg_2eps = 0.0;
  rep.follower.resize(directions);
  rep.leader.resize(directions);
  for (int d = 0; d < directions; ++d) {
    const CostEstimate f = reduce(fdiff[d], "dJ_f");
    const CostEstimate f2 = reduce(fdiff2[d], "dJ_f2");
    const CostEstimate l = reduce(ldiff[d], "dJ_l");
    DirectionResult& fr = rep.follower[d];
    fr.mean_diff = f.mean;
    fr.se = f.se;
    fr.mean_diff_double_eps = f2.mean;
    fr.se_double_eps = f2.se;
    fr.pass = f.mean >= -(3.0 * f.se + 1e-9);
    if (fr.pass) ++rep.follower_pass;
    DirectionResult& lr = rep.leader[d];
    lr.mean_diff = l.mean;
    lr.se = l.se;
    lr.pass = l.mean <= 3.0 * l.se + 1e-9;
    if (lr.pass) ++rep.leader_pass;
    agg_eps += f.mean;
    agg_2eps += f2.mean;
  }
  rep.eps2_ratio = agg_eps != 0.0 ? agg_2eps / agg_eps : 0.0;
  rep.pass_follower_all = rep.follower_pass == directions;
  rep.pass_leader_95 = rep.leader_pass * 100 >= directions * 95;
  return rep;
}

std::vector<ValueCheckRow> value_check(const EquilibriumPolicy& policy,
                                       const std::vector<Eigen::VectorXd>& xs,
                                       const McOptions& opts) {
  std::vector<ValueCheckRow> rows;
  for (const Eigen::VectorXd& x : xs) {
    ValueCheckRow row;
    row.x = x;
    const ValueReport vr = value_functions(policy, x, policy.problem().i0);
    if (policy.problem().is_reduced()) {
      row.analytic = vr.V_L;
      const CostEstimate mc =
          estimate_leader_cost(policy, x, policy.problem().i0, opts);
      row.mc = mc.mean;
      row.se = mc.se;
    } else {
      row.analytic = vr.V;
      const CostEstimate mc =
          estimate_cost(policy, ControlSpec::equilibrium(),
                        ControlSpec::equilibrium(), x, policy.problem().i0,
                        opts, CostFunctional::game);
      row.mc = mc.mean;
      row.se = mc.se;
      if (vr.v_f_available) {
        row.vf_available = true;
        row.vf_analytic = vr.V_F;
        const CostEstimate mcf =
            estimate_cost(policy, ControlSpec::equilibrium(),
                          ControlSpec::equilibrium(), x, policy.problem().i0,
                          opts, CostFunctional::follower);
        row.vf_mc = mcf.mean;
        row.vf_se = mcf.se;
        row.vf_pass = std::abs(row.vf_analytic - row.vf_mc) <=
                      3.0 * row.vf_se + 1e-4 * std::max(1.0, std::abs(row.vf_analytic));
      }
    }
    row.pass = std::abs(row.analytic - row.mc) <=
               3.0 * row.se + 1e-4 * std::max(1.0, std::abs(row.analytic));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace rslq
