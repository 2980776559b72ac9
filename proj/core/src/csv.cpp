#include "rslq/csv.hpp"

#include <cstdio>
#include <fstream>

namespace rslq {

std::string format_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string riccati_csv(const RiccatiSolution& sol) {
  std::string out;
  const char* kind = sol.kind == RiccatiSolution::Kind::follower_p
                         ? "follower-P"
                         : (sol.kind == RiccatiSolution::Kind::leader_sigma
                                ? "leader-Sigma"
                                : "lambda-P");
  out += "# kind=" + std::string(kind) +
         " method=rk4 order=4 steps=" + std::to_string(sol.meta.steps_used) +
         " h=" + format_full(sol.meta.step) +
         " max_residual=" + format_full(sol.meta.max_ode_residual) +
         " max_symmetry_defect=" + format_full(sol.meta.max_symmetry_defect) +
         "\n";
  out += "s,regime,row,col,value\n";
  for (int j = 0; j < sol.grid.nodes(); ++j) {
    const double s = sol.grid.node(j);
    for (int i = 1; i <= sol.num_regimes(); ++i) {
      const Eigen::MatrixXd& m = sol.at_node(j, i);
      for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
          out += format_full(s) + "," + std::to_string(i) + "," +
                 std::to_string(r) + "," + std::to_string(c) + "," +
                 format_full(m(r, c)) + "\n";
    }
  }
  return out;
}

std::string backward_csv(const BackwardTable& table) {
  std::string out;
  out += "# kind=backward-table theta=0 steps=" +
         std::to_string(table.grid.cells) +
         " h=" + format_full(table.grid.step) + "\n";
  out += "s,regime,row,col,value\n";
  for (int j = 0; j < table.grid.nodes(); ++j) {
    const double s = table.grid.node(j);
    for (int i = 1; i <= table.num_regimes(); ++i) {
      const Eigen::VectorXd& v = table.at_node(j, i);
      for (int r = 0; r < v.size(); ++r)
        out += format_full(s) + "," + std::to_string(i) + "," +
               std::to_string(r) + ",0," + format_full(v(r)) + "\n";
    }
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open output file '" + path + "'");
  out << content;
}

}  // namespace rslq
