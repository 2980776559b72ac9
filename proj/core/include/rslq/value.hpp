#pragma once

#include <Eigen/Core>
#include <vector>

#include "rslq/generator.hpp"
#include "rslq/policy.hpp"

namespace rslq {

// Marginal law of the chain on the grid nodes: out[j](i-1) = P(alpha(s_j)=i),
// integrated with RK4 from the forward equation dp/ds = lambda(s)' p.
std::vector<Eigen::VectorXd> kolmogorov_forward(const Generator& g, int i0,
                                                const TimeGrid& grid);

struct ValueReport {
  double V_L = 0.0;  // leader-problem value
  double V = std::numeric_limits<double>::quiet_NaN();    // equilibrium value
  double V_F = std::numeric_limits<double>::quiet_NaN();  // follower value
  bool v_available = false;
  bool v_f_available = false;
};

// Closed-form value functions evaluated by quadrature over the chain law.
// V requires a primal problem; V_F additionally requires phi* to be
// deterministic (vanishing diffusion and regime-independent drift), since
// only then do all integrands reduce to deterministic regime-indexed
// functions. Monte Carlo estimates of the same quantities live in the
// montecarlo module.
ValueReport value_functions(const EquilibriumPolicy& policy,
                            const Eigen::VectorXd& x, int i0);

}  // namespace rslq
