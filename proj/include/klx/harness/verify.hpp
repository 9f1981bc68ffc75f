#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace klx::harness {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string measured;
  std::string tolerance;
  double seconds = 0.0;
};

// Suites: all, rejection, identities, core-linalg, exact-oracle, instances, spanner, baselines, multiturn.
const std::vector<std::string>& verify_suites();
std::vector<int> suite_criteria(const std::string& suite);

CheckResult run_criterion(int id);
std::string format_check(const CheckResult& r);

// Runs a suite, printing each line to `live` as soon as it finishes.
std::vector<CheckResult> verify(const std::string& suite, std::ostream* live = nullptr);

}  // namespace klx::harness
