#pragma once

#include <memory>
#include <vector>

#include "rslq/problem.hpp"

namespace rslq {

// Sampled evidence for the uniform convexity / concavity of the homogeneous
// functional: Monte Carlo ratios J0(0,i;u1,0)/E||u1||^2 (bounded below by the
// convexity constant) and J0(0,i;0,u2)/E||u2||^2 (bounded above by the
// negated concavity constant). A necessary-condition check, not a proof.
struct ConvexityReport {
  struct Row {
    int probe = 0;
    int regime = 0;  // initial regime of the chain
    double ratio = 0.0;
    double se = 0.0;
  };
  int probes = 0;
  std::vector<Row> u1_rows, u2_rows;
  double min_u1_ratio = 0.0;
  double min_u1_ratio_se = 0.0;
  double max_u2_ratio = 0.0;
  double max_u2_ratio_se = 0.0;
};

ConvexityReport probe_convexity(std::shared_ptr<const ProblemData> p,
                                int num_probes, long long paths,
                                std::uint64_t seed, int steps = 0,
                                int workers = 1);

}  // namespace rslq
