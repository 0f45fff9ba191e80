#pragma once

// Invariant suites behind `augmp verify`.

#include <iosfwd>
#include <string>
#include <vector>

namespace augmp {

struct CheckResult {
  std::string module;
  std::string operation;
  std::string check;
  double value = 0.0;      // measured error or statistic
  double tolerance = 0.0;  // pass iff value <= tolerance
  bool passed = false;
};

/// numerics, gradients, gst, duals, determinism, all.
const std::vector<std::string>& verify_suites();
std::vector<CheckResult> run_verify(const std::string& suite);
/// Prints the table; returns true when every check passed.
bool print_report(const std::vector<CheckResult>& results, std::ostream& out);

}  // namespace augmp
