#pragma once

#include <vector>

#include "rslq/generator.hpp"
#include "rslq/rng.hpp"

namespace rslq {

// One realized trajectory of the modulating chain on [0, horizon]. The path
// is right-continuous with left limits; post_jump_states[k] is the state
// entered at jump_times[k].
struct RegimePath {
  int initial = 1;
  double horizon = 0.0;
  std::vector<double> jump_times;
  std::vector<int> post_jump_states;

  int num_jumps() const { return static_cast<int>(jump_times.size()); }

  // alpha(t), right-continuous.
  int regime_at(double t) const {
    int state = initial;
    for (std::size_t k = 0; k < jump_times.size() && jump_times[k] <= t; ++k)
      state = post_jump_states[k];
    return state;
  }

  // alpha(t-): the regime in force just before t (equals initial at t=0).
  int regime_before(double t) const {
    int state = initial;
    for (std::size_t k = 0; k < jump_times.size() && jump_times[k] < t; ++k)
      state = post_jump_states[k];
    return state;
  }

  // N_k(t): number of jumps into state k up to and including time t.
  int jumps_into(int k, double t) const;
};

// Exact simulation: exponential holding times with the current exit rate and
// embedded-chain transition probabilities. Piecewise-constant rates are
// handled by re-drawing across piece boundaries; no discretization error.
RegimePath simulate_chain(const Generator& g, int initial_regime,
                          double horizon, RngStream& rng);

// Compensated jump counter  N_k(t) - int_0^t sum_{i != k} lambda_ik(s)
// 1{alpha(s-)=i} ds,  with the integral evaluated exactly over the sojourn
// intervals of the path and the pieces of the generator.
double compensator(const RegimePath& path, const Generator& g, int k,
                   double t);

}  // namespace rslq
