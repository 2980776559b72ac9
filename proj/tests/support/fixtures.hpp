#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "rslq/problem.hpp"

#ifndef RSLQ_TEST_DATA_DIR
#define RSLQ_TEST_DATA_DIR "."
#endif

namespace testsupport {

inline std::string data_path(const std::string& name) {
  return std::string(RSLQ_TEST_DATA_DIR) + "/" + name;
}

inline std::shared_ptr<const rslq::ProblemData> example1() {
  static auto p = std::make_shared<rslq::ProblemData>(
      rslq::load_problem_file(data_path("example1.prob")));
  return p;
}

inline std::shared_ptr<const rslq::ProblemData> example2() {
  static auto p = std::make_shared<rslq::ProblemData>(
      rslq::load_problem_file(data_path("example2.prob")));
  return p;
}

// Scalar two-regime problem with every coefficient active; used for generic
// machinery checks where no closed form is needed.
inline std::shared_ptr<const rslq::ProblemData> dense_scalar_problem() {
  static auto p = [] {
    const std::string text = R"prob(
[meta]
T = 1
n = 1
m1 = 1
m2 = 1
D = 2
grid_steps = 200

[generator]
-0.5 0.5
0.7 -0.7

[regime 1]
A = 0.3
B1 = 0.5
B2 = 1
C = 0.2
D1 = 1
D2 = 0.3
b = 0.1
sigma = 0.2
Q = 1
R1 = 2
R2 = -2
M = 0.5
m = 0.3

[regime 2]
A = -0.2
B1 = 0.2
B2 = -1
C = 0.1
D1 = 0.8
D2 = -0.2
b = -0.1
sigma = 0.1
Q = 0.5
R1 = 1.5
R2 = -3
M = -0.2
m = -0.4

[initial]
x = 0.7
i = 1
)prob";
    return std::make_shared<rslq::ProblemData>(rslq::load_problem(text));
  }();
  return p;
}

// 3/8-rule Runge-Kutta, used as the independent fine-step integrator in the
// two-integrator consistency checks. Integrates backward from the terminal
// value on a uniform grid; rhs(s, piece_time, state).
template <class Rhs>
std::vector<std::vector<Eigen::MatrixXd>> rk38_backward(
    double horizon, int cells, std::vector<Eigen::MatrixXd> terminal,
    Rhs&& rhs) {
  const double h = horizon / cells;
  std::vector<std::vector<Eigen::MatrixXd>> nodes(cells + 1);
  auto axpy = [](std::vector<Eigen::MatrixXd>& y, double a,
                 const std::vector<Eigen::MatrixXd>& x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
  };
  std::vector<Eigen::MatrixXd> v = std::move(terminal);
  nodes[cells] = v;
  for (int j = cells; j >= 1; --j) {
    const double s1 = h * j;
    const double sm = s1 - 0.5 * h;
    auto k1 = rhs(s1, sm, v);
    auto t = v;
    axpy(t, -h / 3.0, k1);
    auto k2 = rhs(s1 - h / 3.0, sm, t);
    t = v;
    axpy(t, h / 3.0, k1);
    axpy(t, -h, k2);
    auto k3 = rhs(s1 - 2.0 * h / 3.0, sm, t);
    t = v;
    axpy(t, -h, k1);
    axpy(t, h, k2);
    axpy(t, -h, k3);
    auto k4 = rhs(s1 - h, sm, t);
    axpy(v, -h / 8.0, k1);
    axpy(v, -3.0 * h / 8.0, k2);
    axpy(v, -3.0 * h / 8.0, k3);
    axpy(v, -h / 8.0, k4);
    nodes[j - 1] = v;
  }
  return nodes;
}

}  // namespace testsupport
