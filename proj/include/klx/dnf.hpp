#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "klx/instance.hpp"
#include "klx/rng.hpp"

namespace klx {

// Conjunction of literals x_j = sign_j. A conjunction that demands both signs of one
// variable (possible after serial repetition) is kept with `contradictory` set.
struct Clause {
  std::vector<int> vars;
  std::vector<std::int8_t> signs;
  bool contradictory = false;
};

struct DnfFormula {
  int n = 0;  // variables
  int k = 0;  // max clause width
  std::vector<Clause> clauses;

  int m() const { return static_cast<int>(clauses.size()); }
  void validate() const;
};

using Assignment = std::vector<std::int8_t>;  // entries in {-1, +1}

inline constexpr int kMaxBruteForceVars = 24;

int dnf_value(const DnfFormula& phi, std::span<const std::int8_t> assignment);

struct DnfOptimum {
  int value;
  Assignment assignment;
};
DnfOptimum dnf_opt(const DnfFormula& phi);

DnfFormula serial_repetition(const DnfFormula& phi, int t, std::size_t max_clauses = std::size_t{1} << 20);

// m clauses of exactly k distinct variables with random signs.
DnfFormula random_dnf(int n, int m, int k, Rng& rng);

AlignmentInstance gen_dnf_instance(const DnfFormula& phi, double beta);

}  // namespace klx
