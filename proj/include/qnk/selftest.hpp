#pragma once

#include <string>
#include <vector>

namespace qnk {

struct SelftestLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Quadrature identity plus the oracle cross-checks (Penrose integral, G, root count, Abel inversion).
std::vector<SelftestLine> run_selftest();

}  // namespace qnk
