#pragma once

#include <string>

#include "rslq/backward.hpp"
#include "rslq/solution.hpp"

namespace rslq {

// All numeric output is printed with %.17g so values round-trip exactly.
std::string format_full(double v);

// Columns: s, regime, row, col, value. A leading comment line carries the
// solver metadata.
std::string riccati_csv(const RiccatiSolution& sol);
std::string backward_csv(const BackwardTable& table);

void write_file(const std::string& path, const std::string& content);

}  // namespace rslq
