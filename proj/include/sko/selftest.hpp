#pragma once

// Invariant suites runnable from the command line.

#include <iosfwd>
#include <string>
#include <vector>

namespace sko {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string failure;  // first failing property, empty on success
  double seconds = 0;
};

std::vector<std::string> selftest_suites();

/// Runs the named suites (all when empty), printing one line per suite.
/// Throws std::invalid_argument for an unknown suite name.
std::vector<SuiteResult> run_selftest(std::ostream& os, const std::vector<std::string>& only = {});

}  // namespace sko
