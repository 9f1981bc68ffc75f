#include <iostream>
#include <string>

#include "klx/harness/verify.hpp"

// Runs the acceptance criteria and prints one line per criterion. Exit code 0 iff all pass.
int main(int argc, char** argv) {
  const std::string suite = argc > 1 ? argv[1] : "all";
  bool ok = true;
  for (const auto& r : klx::harness::verify(suite, &std::cout)) ok = ok && r.passed;
  std::cout << (ok ? "acceptance: all criteria passed" : "acceptance: FAILED") << std::endl;
  return ok ? 0 : 1;
}
