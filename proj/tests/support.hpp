#pragma once

// Hand-rolled generators for property tests. Every generator draws from a klx::Rng
// so a failing case is reproducible from its trial index.

#include <cmath>
#include <random>

#include "klx/linalg.hpp"
#include "klx/rng.hpp"

namespace klx::test {

inline Vec gaussian(int d, Rng& rng) {
  std::normal_distribution<double> n01;
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = n01(rng);
  return v;
}

// Uniform direction, radius uniform in [0, r].
inline Vec in_ball(int d, double r, Rng& rng) {
  Vec v = gaussian(d, rng);
  const double n = v.norm();
  return n > 0 ? Vec(v / n * r * rng.uniform()) : Vec(Vec::Zero(d));
}

inline int uniform_int(int lo, int hi, Rng& rng) { return lo + static_cast<int>(rng.below(hi - lo + 1)); }

inline double uniform_real(double lo, double hi, Rng& rng) { return lo + (hi - lo) * rng.uniform(); }

inline Vec distribution(int n, Rng& rng, double floor = 0.0) {
  Vec p(n);
  for (int i = 0; i < n; ++i) p[i] = floor + rng.uniform();
  return p / p.sum();
}

inline double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

inline double tv(const Vec& p, const Vec& q) { return 0.5 * (p - q).cwiseAbs().sum(); }

}  // namespace klx::test
