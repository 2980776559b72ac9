#pragma once

#include <cmath>
#include <vector>

#include "rslq/errors.hpp"

namespace rslq {

// Uniform partition of [0, T] with `cells` intervals. Node j sits at j*step,
// cell j is [node(j), node(j+1)).
struct TimeGrid {
  double horizon = 0.0;
  int cells = 0;
  double step = 0.0;

  static TimeGrid uniform(double horizon, int cells) {
    if (horizon <= 0.0) throw Error("time grid: horizon must be positive");
    if (cells < 1) throw Error("time grid: need at least one cell");
    return TimeGrid{horizon, cells, horizon / cells};
  }

  // Smallest refinement of `uniform(horizon, min_cells)` whose nodes contain
  // every breakpoint. Refinement factors up to 1024 are tried.
  static TimeGrid aligned(double horizon, int min_cells,
                          const std::vector<double>& breakpoints);

  int nodes() const { return cells + 1; }
  double node(int j) const { return step * j; }

  bool contains_as_node(double s, double tol) const {
    double r = s / step;
    return std::abs(r - std::round(r)) * step <= tol;
  }

  // Index of the node closest to s; throws if s is not a node within tol.
  int node_index(double s, double tol = 1e-9) const {
    int j = static_cast<int>(std::round(s / step));
    if (j < 0 || j > cells || std::abs(s - node(j)) > tol)
      throw Error("time " + std::to_string(s) + " is not a grid node");
    return j;
  }

  // Cell containing s, clamped so that s == horizon maps to the last cell.
  int cell_of(double s) const {
    int c = static_cast<int>(std::floor(s / step));
    if (c < 0) c = 0;
    if (c >= cells) c = cells - 1;
    return c;
  }
};

inline TimeGrid TimeGrid::aligned(double horizon, int min_cells,
                                  const std::vector<double>& breakpoints) {
  for (int factor = 1; factor <= 1024; ++factor) {
    TimeGrid g = uniform(horizon, min_cells * factor);
    bool ok = true;
    for (double b : breakpoints) {
      if (b <= 0.0 || b >= horizon) continue;
      if (!g.contains_as_node(b, 1e-9 * horizon)) {
        ok = false;
        break;
      }
    }
    if (ok) return g;
  }
  throw Error(
      "time grid: coefficient breakpoints cannot be aligned with a uniform "
      "grid (refinement factor over 1024); choose compatible breakpoints or "
      "step count");
}

}  // namespace rslq
