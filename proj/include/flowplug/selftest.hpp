#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace flowplug {

struct SelftestCase {
  std::string name;
  std::function<bool(std::string& detail)> run;
};

// Fast invariant checks that ship with the binary: flow bijectivity and
// log-determinant, gradient vs finite differences, the contrastive identity,
// Spearman vs its brute-force oracle, backbone inversion.
std::vector<SelftestCase> selftest_cases();

// Prints one PASS/FAIL line per case; true when all pass.
bool run_selftest(std::ostream& out);

}  // namespace flowplug
