#pragma once

#include <string>
#include <vector>

namespace qmeas {

// Exit codes: 0 all checks pass; 2 a certified condition or declared
// tolerance failed; 1 internal error; 64 usage or configuration error.
inline constexpr int exit_ok = 0;
inline constexpr int exit_internal = 1;
inline constexpr int exit_condition_failed = 2;
inline constexpr int exit_usage = 64;

struct SelftestEntry {
  std::string name;
  bool pass = false;
  double metric = 0;
  std::string detail;
};

// Deterministic invariant battery shared by `qmeas selftest` and the tests.
// `fault` names an injected defect ("completeness") used to prove the battery
// actually detects broken models; empty runs the honest suite.
std::vector<SelftestEntry> run_selftest_battery(const std::string& fault = "");

int run_cli(int argc, char** argv);

}  // namespace qmeas
