#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

namespace klx {

// Counter-based generator: output i is splitmix64(key + i * gamma). Streams are
// keyed by (seed, name) so draws never depend on how other components interleave.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed, std::string_view stream = "root");

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + kGamma * ++counter_); }

  Rng split(std::string_view name) const;
  Rng split(std::uint64_t index) const;

  double uniform();  // [0, 1), 53 bits
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t below(std::uint64_t n);  // uniform on {0..n-1}, unbiased

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix(std::uint64_t z);
  static std::uint64_t hash_name(std::string_view s);

 private:
  Rng(std::uint64_t key, std::uint64_t counter, int) : key_(key), counter_(counter) {}

  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Walker alias table over a finite support. O(1) draws.
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(std::span<const double> weights);

  int sample(Rng& rng) const;
  int size() const { return static_cast<int>(prob_.size()); }
  double weight(int i) const { return p_[i]; }
  std::span<const double> probabilities() const { return p_; }

 private:
  std::vector<double> prob_;
  std::vector<int> alias_;
  std::vector<double> p_;
};

// counts[i] ~ Multinomial(n, p) via a chain of conditional binomials.
void sample_multinomial(std::uint64_t n, std::span<const double> p, Rng& rng,
                        std::vector<std::uint64_t>& counts);

}  // namespace klx
