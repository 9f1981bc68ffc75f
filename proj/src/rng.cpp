#include "klx/rng.hpp"

#include <cmath>
#include <numeric>
#include <boost/random/binomial_distribution.hpp>

#include "klx/errors.hpp"

namespace klx {

std::uint64_t Rng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::hash_name(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed, std::string_view stream)
    : key_(mix(mix(seed ^ 0x6a09e667f3bcc909ULL) ^ hash_name(stream))) {}

Rng Rng::split(std::string_view name) const {
  return Rng(mix(key_ ^ mix(hash_name(name) + 0x3c6ef372fe94f82bULL)), 0, 0);
}

Rng Rng::split(std::uint64_t index) const {
  return Rng(mix(key_ + mix(index ^ 0xa54ff53a5f1d36f1ULL)), 0, 0);
}

double Rng::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ValidationError("Rng::below: empty range");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    std::uint64_t r = (*this)();
    if (r >= threshold) return r % n;
  }
}

AliasTable::AliasTable(std::span<const double> weights) {
  const std::size_t n = weights.size();
  if (n == 0) throw ValidationError("AliasTable: empty support");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("AliasTable: bad weight");
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("AliasTable: zero total weight");

  p_.resize(n);
  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<int> small, large;
  for (std::size_t i = 0; i < n; ++i) {
    p_[i] = weights[i] / total;
    scaled[i] = p_[i] * static_cast<double>(n);
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<int>(i));
  }
  while (!small.empty() && !large.empty()) {
    int s = small.back(), l = large.back();
    small.pop_back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  for (int l : large) prob_[l] = 1.0, alias_[l] = l;
  // leftovers from rounding; a zero-weight entry must never be returned
  for (int s : small) {
    prob_[s] = p_[s] > 0.0 ? 1.0 : 0.0;
    alias_[s] = s;
    if (p_[s] == 0.0) {
      for (std::size_t j = 0; j < n; ++j)
        if (p_[j] > 0.0) { alias_[s] = static_cast<int>(j); break; }
    }
  }
}

int AliasTable::sample(Rng& rng) const {
  const std::uint64_t r = rng();
  const int i = static_cast<int>((r >> 32) * prob_.size() >> 32);
  const double u = static_cast<double>(r & 0xffffffffULL) * 0x1.0p-32;
  return u < prob_[i] ? i : alias_[i];
}

void sample_multinomial(std::uint64_t n, std::span<const double> p, Rng& rng,
                        std::vector<std::uint64_t>& counts) {
  counts.assign(p.size(), 0);
  double remaining = std::accumulate(p.begin(), p.end(), 0.0);
  std::uint64_t left = n;
  for (std::size_t i = 0; i < p.size() && left > 0; ++i) {
    if (p[i] <= 0.0) continue;
    if (i + 1 == p.size() || p[i] >= remaining) {
      counts[i] = left;
      left = 0;
      break;
    }
    boost::random::binomial_distribution<std::int64_t, double> bin(static_cast<std::int64_t>(left),
                                                                   std::min(1.0, p[i] / remaining));
    counts[i] = static_cast<std::uint64_t>(bin(rng));
    left -= counts[i];
    remaining -= p[i];
  }
  if (left > 0) {  // residual rounding: give to the last positive entry
    for (std::size_t i = p.size(); i-- > 0;)
      if (p[i] > 0.0) { counts[i] += left; break; }
  }
}

}  // namespace klx
