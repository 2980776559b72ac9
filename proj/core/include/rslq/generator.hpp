#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

#include "rslq/errors.hpp"

namespace rslq {

// Transition-rate matrix of the modulating chain, piecewise constant in
// time. Piece k holds on [start_k, start_{k+1}) and the last piece extends
// to the horizon. Regimes are 1-based in the public interface.
class Generator {
 public:
  Generator(int num_regimes, Eigen::MatrixXd constant_rates);
  Generator(int num_regimes,
            std::vector<std::pair<double, Eigen::MatrixXd>> pieces);

  int num_regimes() const { return num_regimes_; }

  const Eigen::MatrixXd& rates(double s) const;
  // lambda_{ij}(s) with 1-based regimes.
  double rate(double s, int i, int j) const {
    return rates(s)(i - 1, j - 1);
  }

  const std::vector<std::pair<double, Eigen::MatrixXd>>& pieces() const {
    return pieces_;
  }
  std::vector<double> breakpoints() const;
  // End of the piece containing s (infinity for the last piece).
  double piece_end(double s) const;

 private:
  int num_regimes_;
  std::vector<std::pair<double, Eigen::MatrixXd>> pieces_;
};

// Checks the rate-matrix conditions: off-diagonal entries nonnegative and
// row sums zero (within 1e-12), on every piece. Returns the generator so the
// call composes; throws GeneratorError naming the first offending entry.
Generator validate_generator(const Generator& g);

}  // namespace rslq
