#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "rslq/generator.hpp"
#include "rslq/errors.hpp"

namespace rslq {

// Per-regime piecewise-constant matrix coefficient. Piece k of a regime
// holds on [start_k, start_{k+1}); the piece starts always include 0.
class PwcTable {
 public:
  PwcTable() = default;
  PwcTable(int num_regimes, const Eigen::MatrixXd& constant_value);

  void add_piece(int regime, double start, Eigen::MatrixXd value);
  void finalize(double horizon);  // sorts and checks coverage of [0, horizon)

  int num_regimes() const { return static_cast<int>(pieces_.size()); }
  bool empty() const { return pieces_.empty(); }
  const Eigen::MatrixXd& at(double s, int regime) const;
  const std::vector<std::pair<double, Eigen::MatrixXd>>& regime_pieces(
      int regime) const {
    return pieces_[regime - 1];
  }
  std::vector<double> breakpoints() const;
  bool constant_in_time() const;

 private:
  std::vector<std::vector<std::pair<double, Eigen::MatrixXd>>> pieces_;
};

// Full game data: dynamics and cost weights indexed by regime, plus the
// chain generator and the initial condition. `kind` distinguishes the usual
// forward specification from a reduced backward-problem specification that
// provides the derived coefficient blocks directly.
struct ProblemData {
  enum class Kind { primal, reduced };

  Kind kind = Kind::primal;
  double horizon = 0.0;
  int n = 0;   // state dimension
  int m1 = 0;  // follower control dimension (0 allowed for reduced problems)
  int m2 = 0;  // leader control dimension
  int num_regimes = 0;
  int grid_steps = 100;

  Generator generator{1, Eigen::MatrixXd::Zero(1, 1)};

  // Primal coefficients (state equation and cost weights).
  PwcTable A, B1, B2, C, D1, D2;  // dynamics
  PwcTable b, sigma;              // inhomogeneous terms (n-vectors)
  PwcTable Q, R1, R2;             // running cost weights (symmetric)
  std::vector<Eigen::MatrixXd> M;     // terminal quadratic weight, per regime
  std::vector<Eigen::VectorXd> m_term;  // terminal linear term, per regime

  // Reduced (backward) coefficients, used when kind == reduced.
  PwcTable Ahat, Chat, Hhat;
  PwcTable G, S1, S2, T11, T12, T22;
  PwcTable q, rho1, rho2, fhat;

  Eigen::VectorXd x0;
  int i0 = 1;

  bool is_reduced() const { return kind == Kind::reduced; }
  std::vector<double> breakpoints() const;

  // Throws DimensionError / GeneratorError on inconsistent data; symmetrizes
  // the weight matrices after a 1e-12 asymmetry check.
  void validate();
};

ProblemData load_problem(const std::string& text);
ProblemData load_problem_file(const std::string& path);
std::string serialize_problem(const ProblemData& p);

}  // namespace rslq
