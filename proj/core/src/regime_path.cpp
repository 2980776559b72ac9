#include "rslq/regime_path.hpp"

#include <algorithm>
#include <cmath>

namespace rslq {

int RegimePath::jumps_into(int k, double t) const {
  int count = 0;
  for (std::size_t j = 0; j < jump_times.size() && jump_times[j] <= t; ++j)
    if (post_jump_states[j] == k) ++count;
  return count;
}

RegimePath simulate_chain(const Generator& g, int initial_regime,
                          double horizon, RngStream& rng) {
  const int D = g.num_regimes();
  if (initial_regime < 1 || initial_regime > D)
    throw Error("simulate_chain: initial regime out of range");
  if (horizon <= 0.0) throw Error("simulate_chain: horizon must be positive");

  RegimePath path;
  path.initial = initial_regime;
  path.horizon = horizon;

  int state = initial_regime;
  double t = 0.0;
  while (t < horizon) {
    const Eigen::MatrixXd& rates = g.rates(t);
    const double exit_rate = -rates(state - 1, state - 1);
    const double piece_end = std::min(g.piece_end(t), horizon);
    if (exit_rate <= 0.0) {
      t = piece_end;  // absorbing under the current rates
      if (t >= horizon) break;
      continue;
    }
    const double wait = rng.exponential(exit_rate);
    if (t + wait >= piece_end) {
      // Holding time spills past the rate piece (or the horizon): advance
      // and re-draw with the new rates; memorylessness keeps this exact.
      t = piece_end;
      if (t >= horizon) break;
      continue;
    }
    t += wait;
    // Embedded-chain transition: P(state -> j) = lambda_{state,j}/exit_rate.
    double u = rng.uniform() * exit_rate;
    int next = -1;
    for (int j = 1; j <= D; ++j) {
      if (j == state) continue;
      u -= rates(state - 1, j - 1);
      if (u <= 0.0) {
        next = j;
        break;
      }
    }
    if (next < 0) {  // guard against rounding in the cumulative sum
      for (int j = D; j >= 1; --j)
        if (j != state && rates(state - 1, j - 1) > 0.0) {
          next = j;
          break;
        }
    }
    path.jump_times.push_back(t);
    path.post_jump_states.push_back(next);
    state = next;
  }
  return path;
}

double compensator(const RegimePath& path, const Generator& g, int k,
                   double t) {
  const int D = g.num_regimes();
  if (k < 1 || k > D)
    throw Error("compensator: regime index " + std::to_string(k) +
                " outside 1.." + std::to_string(D));
  if (t > path.horizon + 1e-12)
    throw Error("compensator: time beyond the simulated horizon");

  // Integrate lambda_{ik}(s) over each interval on which both the path state
  // i and the rate piece are constant.
  double integral = 0.0;
  double seg_start = 0.0;
  int state = path.initial;
  std::size_t jump = 0;
  while (seg_start < t) {
    double seg_end = t;
    if (jump < path.jump_times.size() && path.jump_times[jump] < seg_end)
      seg_end = path.jump_times[jump];
    const double piece_end = g.piece_end(seg_start);
    if (piece_end < seg_end) seg_end = piece_end;

    if (state != k)
      integral += g.rate(seg_start, state, k) * (seg_end - seg_start);

    if (jump < path.jump_times.size() &&
        seg_end == path.jump_times[jump]) {
      state = path.post_jump_states[jump];
      ++jump;
    }
    seg_start = seg_end;
  }
  return path.jumps_into(k, t) - integral;
}

}  // namespace rslq
