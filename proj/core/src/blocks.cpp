#include "rslq/blocks.hpp"

#include "rslq/linalg.hpp"

namespace rslq {

namespace {

const Eigen::MatrixXd& p_at(const RiccatiSolution& P, double s, int regime) {
  return P.at_time(s, regime, 1e-9 * std::max(1.0, P.grid.horizon));
}

}  // namespace

std::shared_ptr<const DerivedBlocks> DerivedBlocks::from_problem(
    std::shared_ptr<const ProblemData> p,
    std::shared_ptr<const RiccatiSolution> P, double cond_ceiling) {
  if (p->is_reduced())
    throw UnsupportedError(
        "derived blocks: reduced problems use from_reduced()");
  if (!P) throw Error("derived blocks: follower solution P required");
  auto d = std::shared_ptr<DerivedBlocks>(new DerivedBlocks());
  d->problem_ = std::move(p);
  d->P_ = std::move(P);
  d->cond_ceiling_ = cond_ceiling;
  return d;
}

std::shared_ptr<const DerivedBlocks> DerivedBlocks::from_reduced(
    std::shared_ptr<const ProblemData> p, double cond_ceiling) {
  if (!p->is_reduced())
    throw UnsupportedError("derived blocks: problem is not reduced");
  auto d = std::shared_ptr<DerivedBlocks>(new DerivedBlocks());
  d->problem_ = std::move(p);
  d->cond_ceiling_ = cond_ceiling;

  d->piece_starts_.push_back(0.0);
  for (double b : d->problem_->breakpoints()) d->piece_starts_.push_back(b);
  const double horizon = d->problem_->horizon;
  for (std::size_t k = 0; k < d->piece_starts_.size(); ++k) {
    const double end = k + 1 < d->piece_starts_.size() ? d->piece_starts_[k + 1]
                                                       : horizon;
    const double mid = 0.5 * (d->piece_starts_[k] + end);
    std::vector<All> row;
    row.reserve(d->problem_->num_regimes);
    for (int i = 1; i <= d->problem_->num_regimes; ++i)
      row.push_back(d->all_uncached(mid, mid, i));
    d->piece_cache_.push_back(std::move(row));
  }
  return d;
}

HatEval DerivedBlocks::hat(double s, double piece_time, int i) const {
  const ProblemData& p = *problem_;
  HatEval h;
  if (p.is_reduced()) {
    h.Ahat = p.Ahat.at(piece_time, i);
    h.Chat = p.Chat.at(piece_time, i);
    h.Hhat = p.Hhat.at(piece_time, i);
    h.fhat = p.fhat.at(piece_time, i);
    h.S1hat = Eigen::MatrixXd::Zero(0, p.n);
    h.R1hat = Eigen::MatrixXd::Zero(0, 0);
    h.R1hat_inv = h.R1hat;
    h.Xi = Eigen::MatrixXd::Zero(0, p.m2);
    h.r1hat_min_eig = std::numeric_limits<double>::infinity();
    return h;
  }
  const Eigen::MatrixXd& P = p_at(*P_, s, i);
  const Eigen::MatrixXd& A = p.A.at(piece_time, i);
  const Eigen::MatrixXd& B1 = p.B1.at(piece_time, i);
  const Eigen::MatrixXd& B2 = p.B2.at(piece_time, i);
  const Eigen::MatrixXd& C = p.C.at(piece_time, i);
  const Eigen::MatrixXd& D1 = p.D1.at(piece_time, i);
  const Eigen::MatrixXd& D2 = p.D2.at(piece_time, i);

  h.S1hat = B1.transpose() * P + D1.transpose() * P * C;
  h.R1hat = p.R1.at(piece_time, i) + D1.transpose() * P * D1;
  symmetrize(h.R1hat);
  auto inv = spd_inverse(h.R1hat, cond_ceiling_,
                         "follower strong regularity (R1hat)", s, i);
  h.R1hat_inv = std::move(inv.inverse);
  h.r1hat_min_eig = inv.min_eig;
  h.Xi = D1.transpose() * P * D2;
  h.Ahat = h.S1hat.transpose() * h.R1hat_inv * B1.transpose() - A.transpose();
  h.Chat = h.S1hat.transpose() * h.R1hat_inv * D1.transpose() - C.transpose();
  h.Hhat = h.Chat * P * D2 - P * B2;
  h.fhat = h.Chat * P * p.sigma.at(piece_time, i) - P * p.b.at(piece_time, i);
  return h;
}

LeaderEval DerivedBlocks::leader(double s, double piece_time, int i) const {
  return leader(s, piece_time, i, hat(s, piece_time, i));
}

LeaderEval DerivedBlocks::leader(double s, double piece_time, int i,
                                 const HatEval& h) const {
  const ProblemData& p = *problem_;
  LeaderEval lb;
  if (p.is_reduced()) {
    lb.G = p.G.at(piece_time, i);
    lb.S1 = p.S1.at(piece_time, i);
    lb.S2 = p.S2.at(piece_time, i);
    lb.T11 = p.T11.at(piece_time, i);
    lb.T12 = p.T12.at(piece_time, i);
    lb.T21 = lb.T12.transpose();
    lb.T22 = p.T22.at(piece_time, i);
    lb.q = p.q.at(piece_time, i);
    lb.rho1 = p.rho1.at(piece_time, i);
    lb.rho2 = p.rho2.at(piece_time, i);
  } else {
    const Eigen::MatrixXd& P = p_at(*P_, s, i);
    const Eigen::MatrixXd& B1 = p.B1.at(piece_time, i);
    const Eigen::MatrixXd& B2 = p.B2.at(piece_time, i);
    const Eigen::MatrixXd& D1 = p.D1.at(piece_time, i);
    const Eigen::MatrixXd& D2 = p.D2.at(piece_time, i);
    const Eigen::VectorXd Psigma = P * p.sigma.at(piece_time, i);

    lb.G = B1 * h.R1hat_inv * B1.transpose();
    symmetrize(lb.G);
    lb.S1 = D1 * h.R1hat_inv * B1.transpose();
    lb.S2 = h.Xi.transpose() * h.R1hat_inv * B1.transpose() - B2.transpose();
    lb.T11 = D1 * h.R1hat_inv * D1.transpose();
    symmetrize(lb.T11);
    lb.T21 = h.Xi.transpose() * h.R1hat_inv * D1.transpose() - D2.transpose();
    lb.T12 = lb.T21.transpose();
    lb.T22 = h.Xi.transpose() * h.R1hat_inv * h.Xi - p.R2.at(piece_time, i) -
             D2.transpose() * P * D2;
    symmetrize(lb.T22);
    lb.q = B1 * h.R1hat_inv * D1.transpose() * Psigma - p.b.at(piece_time, i);
    lb.rho1 =
        D1 * h.R1hat_inv * D1.transpose() * Psigma - p.sigma.at(piece_time, i);
    lb.rho2 = h.Xi.transpose() * h.R1hat_inv * D1.transpose() * Psigma -
              D2.transpose() * Psigma;
  }
  auto inv = spd_inverse(lb.T22, cond_ceiling_,
                         "leader weight T22 (uniform convexity-concavity evidence)",
                         s, i);
  lb.T22_inv = std::move(inv.inverse);
  lb.t22_min_eig = inv.min_eig;
  return lb;
}

TildeEval DerivedBlocks::tilde(double s, double piece_time, int i) const {
  const HatEval h = hat(s, piece_time, i);
  const LeaderEval lb = leader(s, piece_time, i, h);
  return tilde_impl(h, lb);
}

TildeEval DerivedBlocks::tilde_impl(const HatEval& h,
                                    const LeaderEval& lb) {
  TildeEval t;
  t.Ftilde = h.Chat - h.Hhat * lb.T22_inv * lb.T21;
  t.S1tilde = lb.S1 - lb.T12 * lb.T22_inv * lb.S2;
  t.T11tilde = lb.T11 - lb.T12 * lb.T22_inv * lb.T21;
  symmetrize(t.T11tilde);
  t.rho1tilde = lb.rho1 - lb.T12 * lb.T22_inv * lb.rho2;
  return t;
}

DerivedBlocks::All DerivedBlocks::all_uncached(double s, double piece_time,
                                               int i) const {
  All a;
  a.hat = hat(s, piece_time, i);
  a.leader = leader(s, piece_time, i, a.hat);
  a.tilde = tilde_impl(a.hat, a.leader);
  return a;
}

DerivedBlocks::All DerivedBlocks::all(double s, double piece_time,
                                      int i) const {
  if (!piece_cache_.empty()) {
    std::size_t k = piece_starts_.size() - 1;
    while (k > 0 && piece_starts_[k] > piece_time) --k;
    return piece_cache_[k][i - 1];
  }
  return all_uncached(s, piece_time, i);
}

OneDimEval DerivedBlocks::one_dim(double s, double piece_time, int i) const {
  if (problem_->n != 1)
    throw UnsupportedError(
        "one-dimensional rewrite requires state dimension n=1");
  const All a = all(s, piece_time, i);
  const double Ftilde = a.tilde.Ftilde(0, 0);
  const double S1tilde = a.tilde.S1tilde(0, 0);
  const double T11tilde = a.tilde.T11tilde(0, 0);
  if (T11tilde == 0.0)
    throw RegularityError("T11tilde vanishes (H5 violated)", s, i);
  const double Ahat = a.hat.Ahat(0, 0);
  const double G = a.leader.G(0, 0);
  const double HT22H =
      (a.hat.Hhat * a.leader.T22_inv * a.hat.Hhat.transpose())(0, 0);
  const double ST22S =
      (a.leader.S2.transpose() * a.leader.T22_inv * a.leader.S2)(0, 0);
  const double ST22H =
      (a.leader.S2.transpose() * a.leader.T22_inv * a.hat.Hhat.transpose())(0, 0);

  OneDimEval r;
  r.calA = Ftilde * S1tilde / T11tilde + ST22H - Ahat;
  r.calB = S1tilde;
  r.calD = T11tilde;
  r.calS = Ftilde;
  r.calQ = Ftilde * Ftilde / T11tilde + HT22H;
  const double r1_direct = G - S1tilde * S1tilde / T11tilde - ST22S;
  if (r1_direct == 0.0)
    throw RegularityError("rewrite weight calR1 vanishes", s, i);
  r.calR1 = 1.0 / r1_direct;
  r.calR2 = T11tilde;

  r.bbB.resize(1, 2);
  r.bbB << 1.0, r.calB;
  r.bbD.resize(1, 2);
  r.bbD << 0.0, r.calD;
  r.bbS.resize(2, 1);
  r.bbS << 0.0, r.calS;
  r.bbR = Eigen::MatrixXd::Zero(2, 2);
  r.bbR(0, 0) = r.calR1;
  r.bbR(1, 1) = r.calR2;
  return r;
}

SigmaOps sigma_ops(const Eigen::MatrixXd& Sigma, const TildeEval& tilde,
                   const LeaderEval& leader, const HatEval& hat,
                   double cond_ceiling, double s, int regime) {
  SigmaOps ops;
  const int n = Sigma.rows();
  ops.That = Eigen::MatrixXd::Identity(n, n) + Sigma * tilde.T11tilde;
  auto inv = general_inverse(ops.That, cond_ceiling,
                             "decoupling matrix That(Sigma)", s, regime);
  ops.That_inv = std::move(inv.inverse);
  ops.that_condition = inv.condition;
  ops.Fhat = tilde.Ftilde + Sigma * tilde.S1tilde.transpose();
  ops.Hhat = hat.Hhat + Sigma * leader.S2.transpose();
  return ops;
}

namespace {

TimeGrid require_same_source_grid(const TimeGrid& g) { return g; }

template <class Eval, class Fn>
std::vector<std::vector<Eval>> materialize(const TimeGrid& grid, int regimes,
                                           Fn&& fn) {
  std::vector<std::vector<Eval>> table(grid.nodes());
  for (int j = 0; j < grid.nodes(); ++j) {
    table[j].reserve(regimes);
    for (int i = 1; i <= regimes; ++i) table[j].push_back(fn(grid.node(j), i));
  }
  return table;
}

}  // namespace

FollowerHatBlock follower_hat(std::shared_ptr<const ProblemData> p,
                              std::shared_ptr<const RiccatiSolution> P,
                              double cond_ceiling) {
  auto src = DerivedBlocks::from_problem(p, P, cond_ceiling);
  FollowerHatBlock out;
  out.grid = P->grid;
  out.source = src;
  out.min_r1hat_eig = std::numeric_limits<double>::infinity();
  out.at = materialize<HatEval>(out.grid, p->num_regimes,
                                [&](double s, int i) { return src->hat(s, i); });
  for (const auto& row : out.at)
    for (const auto& h : row)
      out.min_r1hat_eig = std::min(out.min_r1hat_eig, h.r1hat_min_eig);
  return out;
}

LeaderBlock leader_block(const FollowerHatBlock& hat) {
  LeaderBlock out;
  out.grid = require_same_source_grid(hat.grid);
  out.source = hat.source;
  out.min_t22_eig = std::numeric_limits<double>::infinity();
  out.at = materialize<LeaderEval>(
      out.grid, hat.source->num_regimes(),
      [&](double s, int i) { return hat.source->leader(s, i); });
  for (const auto& row : out.at)
    for (const auto& lb : row)
      out.min_t22_eig = std::min(out.min_t22_eig, lb.t22_min_eig);
  return out;
}

TildeBlock tilde_block(const LeaderBlock& lb) {
  TildeBlock out;
  out.grid = lb.grid;
  out.source = lb.source;
  out.at = materialize<TildeEval>(
      out.grid, lb.source->num_regimes(),
      [&](double s, int i) { return lb.source->tilde(s, i); });
  return out;
}

OneDimBlock one_dim_rewrite(const TildeBlock& tb) {
  OneDimBlock out;
  out.grid = tb.grid;
  out.source = tb.source;
  out.at = materialize<OneDimEval>(
      out.grid, tb.source->num_regimes(),
      [&](double s, int i) { return tb.source->one_dim(s, i); });
  return out;
}

ReducedBlockSet reduced_blocks(std::shared_ptr<const ProblemData> p, int steps,
                               double cond_ceiling) {
  auto src = DerivedBlocks::from_reduced(p, cond_ceiling);
  const TimeGrid grid =
      TimeGrid::aligned(p->horizon, steps, p->breakpoints());
  ReducedBlockSet set;
  set.hat.grid = set.leader.grid = set.tilde.grid = grid;
  set.hat.source = set.leader.source = set.tilde.source = src;
  set.hat.at = materialize<HatEval>(
      grid, p->num_regimes, [&](double s, int i) { return src->hat(s, i); });
  set.hat.min_r1hat_eig = std::numeric_limits<double>::infinity();
  set.leader.at = materialize<LeaderEval>(
      grid, p->num_regimes, [&](double s, int i) { return src->leader(s, i); });
  set.leader.min_t22_eig = std::numeric_limits<double>::infinity();
  for (const auto& row : set.leader.at)
    for (const auto& lb : row)
      set.leader.min_t22_eig = std::min(set.leader.min_t22_eig, lb.t22_min_eig);
  set.tilde.at = materialize<TildeEval>(
      grid, p->num_regimes, [&](double s, int i) { return src->tilde(s, i); });
  return set;
}

}  // namespace rslq
