#include "rslq/generator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rslq {

Generator::Generator(int num_regimes, Eigen::MatrixXd constant_rates)
    : num_regimes_(num_regimes) {
  pieces_.emplace_back(0.0, std::move(constant_rates));
}

Generator::Generator(int num_regimes,
                     std::vector<std::pair<double, Eigen::MatrixXd>> pieces)
    : num_regimes_(num_regimes), pieces_(std::move(pieces)) {
  if (pieces_.empty()) throw GeneratorError("generator: no rate pieces given");
  std::sort(pieces_.begin(), pieces_.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  if (pieces_.front().first != 0.0)
    throw GeneratorError("generator: first rate piece must start at t=0");
  for (std::size_t k = 1; k < pieces_.size(); ++k)
    if (pieces_[k].first <= pieces_[k - 1].first)
      throw GeneratorError("generator: rate piece starts must increase");
}

const Eigen::MatrixXd& Generator::rates(double s) const {
  std::size_t k = pieces_.size() - 1;
  while (k > 0 && pieces_[k].first > s) --k;
  return pieces_[k].second;
}

std::vector<double> Generator::breakpoints() const {
  std::vector<double> out;
  for (std::size_t k = 1; k < pieces_.size(); ++k)
    out.push_back(pieces_[k].first);
  return out;
}

double Generator::piece_end(double s) const {
  for (std::size_t k = 1; k < pieces_.size(); ++k)
    if (pieces_[k].first > s) return pieces_[k].first;
  return std::numeric_limits<double>::infinity();
}

Generator validate_generator(const Generator& g) {
  const int D = g.num_regimes();
  for (const auto& [start, rates] : g.pieces()) {
    if (rates.rows() != D || rates.cols() != D)
      throw GeneratorError("generator: rate matrix at t=" +
                           std::to_string(start) + " is not " +
                           std::to_string(D) + "x" + std::to_string(D));
    for (int i = 0; i < D; ++i) {
      for (int j = 0; j < D; ++j) {
        if (i != j && rates(i, j) < 0.0)
          throw GeneratorError(
              "generator: negative off-diagonal rate lambda(" +
              std::to_string(i + 1) + "," + std::to_string(j + 1) + ")=" +
              std::to_string(rates(i, j)) + " at t=" + std::to_string(start));
      }
      const double row_sum = rates.row(i).sum();
      if (std::abs(row_sum) > 1e-12)
        throw GeneratorError("generator: row " + std::to_string(i + 1) +
                             " sums to " + std::to_string(row_sum) + " at t=" +
                             std::to_string(start));
    }
  }
  return g;
}

}  // namespace rslq
