#include "rslq/problem.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace rslq {

PwcTable::PwcTable(int num_regimes, const Eigen::MatrixXd& constant_value) {
  pieces_.resize(num_regimes);
  for (auto& p : pieces_) p.emplace_back(0.0, constant_value);
}

void PwcTable::add_piece(int regime, double start, Eigen::MatrixXd value) {
  if (regime < 1) throw DimensionError("coefficient table: bad regime index");
  if (static_cast<int>(pieces_.size()) < regime) pieces_.resize(regime);
  pieces_[regime - 1].emplace_back(start, std::move(value));
}

void PwcTable::finalize(double horizon) {
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    auto& ps = pieces_[i];
    if (ps.empty())
      throw DimensionError("coefficient table: regime " + std::to_string(i + 1) +
                           " has no pieces");
    std::sort(ps.begin(), ps.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    if (std::abs(ps.front().first) > 1e-12 * std::max(1.0, horizon))
      throw DimensionError("coefficient table: regime " +
                           std::to_string(i + 1) +
                           " pieces do not start at t=0");
    ps.front().first = 0.0;
    for (std::size_t k = 1; k < ps.size(); ++k) {
      if (ps[k].first <= ps[k - 1].first)
        throw DimensionError("coefficient table: overlapping pieces in regime " +
                             std::to_string(i + 1));
      if (ps[k].first >= horizon)
        throw DimensionError("coefficient table: piece start beyond horizon in regime " +
                             std::to_string(i + 1));
      if (ps[k].second.rows() != ps[0].second.rows() ||
          ps[k].second.cols() != ps[0].second.cols())
        throw DimensionError("coefficient table: piece shape changes in regime " +
                             std::to_string(i + 1));
    }
  }
}

const Eigen::MatrixXd& PwcTable::at(double s, int regime) const {
  const auto& ps = pieces_[regime - 1];
  std::size_t k = ps.size() - 1;
  while (k > 0 && ps[k].first > s) --k;
  return ps[k].second;
}

std::vector<double> PwcTable::breakpoints() const {
  std::vector<double> out;
  for (const auto& ps : pieces_)
    for (std::size_t k = 1; k < ps.size(); ++k) out.push_back(ps[k].first);
  return out;
}

bool PwcTable::constant_in_time() const {
  for (const auto& ps : pieces_)
    if (ps.size() > 1) return false;
  return true;
}

namespace {

void check_dims(const PwcTable& t, int D, int rows, int cols,
                const std::string& key) {
  if (t.num_regimes() != D)
    throw DimensionError("coefficient " + key + ": expected " +
                         std::to_string(D) + " regimes, got " +
                         std::to_string(t.num_regimes()));
  for (int i = 1; i <= D; ++i) {
    for (const auto& [start, value] : t.regime_pieces(i)) {
      (void)start;
      if (value.rows() != rows || value.cols() != cols)
        throw DimensionError(
            "coefficient " + key + ", regime " + std::to_string(i) +
            ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
            ", got " + std::to_string(value.rows()) + "x" +
            std::to_string(value.cols()));
    }
  }
}

void symmetrize_checked(PwcTable& t, int D, const std::string& key) {
  for (int i = 1; i <= D; ++i) {
    for (auto& [start, value] :
         const_cast<std::vector<std::pair<double, Eigen::MatrixXd>>&>(
             t.regime_pieces(i))) {
      (void)start;
      const double defect =
          (value - value.transpose()).cwiseAbs().maxCoeff();
      const double scale = std::max(1.0, value.cwiseAbs().maxCoeff());
      if (defect > 1e-12 * scale)
        throw DimensionError("coefficient " + key + ", regime " +
                             std::to_string(i) + ": asymmetric beyond tolerance (defect " +
                             std::to_string(defect) + ")");
      value = 0.5 * (value + value.transpose()).eval();
    }
  }
}

void append(std::vector<double>& dst, const std::vector<double>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

std::vector<double> ProblemData::breakpoints() const {
  std::vector<double> out = generator.breakpoints();
  const PwcTable* tables_primal[] = {&A, &B1, &B2, &C,  &D1, &D2,
                                     &b, &sigma, &Q, &R1, &R2};
  const PwcTable* tables_reduced[] = {&Ahat, &Chat, &Hhat, &G,   &S1,
                                      &S2,   &T11,  &T12,  &T22, &q,
                                      &rho1, &rho2, &fhat};
  if (kind == Kind::primal)
    for (const auto* t : tables_primal) append(out, t->breakpoints());
  else
    for (const auto* t : tables_reduced) append(out, t->breakpoints());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void ProblemData::validate() {
  if (horizon <= 0.0) throw DimensionError("meta: horizon T must be positive");
  if (n < 1) throw DimensionError("meta: state dimension n must be positive");
  if (m2 < 1) throw DimensionError("meta: control dimension m2 must be positive");
  if (num_regimes < 1) throw DimensionError("meta: D must be positive");
  if (grid_steps < 10) throw DimensionError("meta: grid_steps must be at least 10");

  validate_generator(generator);

  const int D = num_regimes;
  if (kind == Kind::primal) {
    if (m1 < 1)
      throw DimensionError("meta: control dimension m1 must be positive");
    check_dims(A, D, n, n, "A");
    check_dims(B1, D, n, m1, "B1");
    check_dims(B2, D, n, m2, "B2");
    check_dims(C, D, n, n, "C");
    check_dims(D1, D, n, m1, "D1");
    check_dims(D2, D, n, m2, "D2");
    check_dims(b, D, n, 1, "b");
    check_dims(sigma, D, n, 1, "sigma");
    check_dims(Q, D, n, n, "Q");
    check_dims(R1, D, m1, m1, "R1");
    check_dims(R2, D, m2, m2, "R2");
    symmetrize_checked(Q, D, "Q");
    symmetrize_checked(R1, D, "R1");
    symmetrize_checked(R2, D, "R2");
    if (static_cast<int>(M.size()) != D || static_cast<int>(m_term.size()) != D)
      throw DimensionError("terminal data M/m: expected one entry per regime");
    for (int i = 0; i < D; ++i) {
      if (M[i].rows() != n || M[i].cols() != n)
        throw DimensionError("terminal weight M, regime " + std::to_string(i + 1) +
                             ": wrong shape");
      const double defect = (M[i] - M[i].transpose()).cwiseAbs().maxCoeff();
      if (defect > 1e-12 * std::max(1.0, M[i].cwiseAbs().maxCoeff()))
        throw DimensionError("terminal weight M, regime " + std::to_string(i + 1) +
                             ": asymmetric beyond tolerance");
      M[i] = 0.5 * (M[i] + M[i].transpose()).eval();
      if (m_term[i].size() != n)
        throw DimensionError("terminal term m, regime " + std::to_string(i + 1) +
                             ": wrong size");
    }
  } else {
    check_dims(Ahat, D, n, n, "Ahat");
    check_dims(Chat, D, n, n, "Chat");
    check_dims(Hhat, D, n, m2, "Hhat");
    check_dims(G, D, n, n, "G");
    check_dims(S1, D, n, n, "S1");
    check_dims(S2, D, m2, n, "S2");
    check_dims(T11, D, n, n, "T11");
    check_dims(T12, D, n, m2, "T12");
    check_dims(T22, D, m2, m2, "T22");
    check_dims(q, D, n, 1, "q");
    check_dims(rho1, D, n, 1, "rho1");
    check_dims(rho2, D, m2, 1, "rho2");
    check_dims(fhat, D, n, 1, "fhat");
    symmetrize_checked(G, D, "G");
    symmetrize_checked(T11, D, "T11");
    symmetrize_checked(T22, D, "T22");
    if (static_cast<int>(m_term.size()) != D)
      throw DimensionError("terminal data m: expected one entry per regime");
    for (int i = 0; i < D; ++i)
      if (m_term[i].size() != n)
        throw DimensionError("terminal term m, regime " + std::to_string(i + 1) +
                             ": wrong size");
  }

  if (x0.size() != n)
    throw DimensionError("initial state x: expected dimension " +
                         std::to_string(n));
  if (i0 < 1 || i0 > D)
    throw DimensionError("initial regime i outside 1.." + std::to_string(D));
}

}  // namespace rslq
