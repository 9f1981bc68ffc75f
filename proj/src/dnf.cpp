#include "klx/dnf.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <map>
#include <numeric>

#include "klx/errors.hpp"

namespace klx {

void DnfFormula::validate() const {
  if (n < 0 || k < 0) throw ValidationError("dnf: negative size");
  for (const Clause& c : clauses) {
    if (c.vars.size() != c.signs.size()) throw ValidationError("dnf: partial assignment not defined on S_i");
    if (static_cast<int>(c.vars.size()) > k) throw ValidationError("dnf: clause wider than k");
    for (std::size_t i = 0; i < c.vars.size(); ++i) {
      if (c.vars[i] < 0 || c.vars[i] >= n) throw ValidationError("dnf: variable out of range");
      if (c.signs[i] != 1 && c.signs[i] != -1) throw ValidationError("dnf: sign must be +-1");
      for (std::size_t j = 0; j < i; ++j)
        if (c.vars[j] == c.vars[i] && !c.contradictory) throw ValidationError("dnf: repeated variable");
    }
  }
}

namespace {

bool satisfied(const Clause& c, std::span<const std::int8_t> a) {
  if (c.contradictory) return false;
  for (std::size_t i = 0; i < c.vars.size(); ++i)
    if (a[c.vars[i]] != c.signs[i]) return false;
  return true;
}

}  // namespace

int dnf_value(const DnfFormula& phi, std::span<const std::int8_t> assignment) {
  if (static_cast<int>(assignment.size()) != phi.n) throw ValidationError("dnf: assignment length");
  int v = 0;
  for (const Clause& c : phi.clauses) v += satisfied(c, assignment);
  return v;
}

DnfOptimum dnf_opt(const DnfFormula& phi) {
  if (phi.n > kMaxBruteForceVars)
    throw ValidationError(fmt::format("dnf_opt: n = {} exceeds brute-force limit {}", phi.n, kMaxBruteForceVars));
  // bit j set <=> x_j = +1
  std::vector<std::uint32_t> mask, want;
  for (const Clause& c : phi.clauses) {
    if (c.contradictory) continue;
    std::uint32_t mk = 0, w = 0;
    for (std::size_t i = 0; i < c.vars.size(); ++i) {
      mk |= 1u << c.vars[i];
      if (c.signs[i] > 0) w |= 1u << c.vars[i];
    }
    mask.push_back(mk);
    want.push_back(w);
  }
  const std::uint32_t total = phi.n == 0 ? 1u : (1u << phi.n);
  int best = -1;
  std::uint32_t arg = 0;
  for (std::uint32_t a = 0; a < total; ++a) {
    int v = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) v += (a & mask[i]) == want[i];
    if (v > best) best = v, arg = a;
  }
  DnfOptimum out{best, Assignment(phi.n)};
  for (int j = 0; j < phi.n; ++j) out.assignment[j] = (arg >> j & 1u) ? 1 : -1;
  return out;
}

DnfFormula serial_repetition(const DnfFormula& phi, int t, std::size_t max_clauses) {
  if (t < 1) throw ValidationError("serial_repetition: t must be positive");
  double count = 1.0;
  for (int i = 0; i < t; ++i) count *= phi.m();
  if (count > static_cast<double>(max_clauses))
    throw BudgetError(fmt::format("serial_repetition: m^t = {} exceeds budget {}", count, max_clauses));
  DnfFormula out{phi.n, phi.k * t, {}};
  const std::size_t total = static_cast<std::size_t>(count);
  out.clauses.reserve(total);
  std::vector<int> idx(t, 0);
  for (std::size_t c = 0; c < total; ++c) {
    std::map<int, std::int8_t> lits;
    bool bad = false;
    for (int i : idx) {
      const Clause& src = phi.clauses[i];
      bad |= src.contradictory;
      for (std::size_t l = 0; l < src.vars.size(); ++l) {
        auto [it, fresh] = lits.emplace(src.vars[l], src.signs[l]);
        if (!fresh && it->second != src.signs[l]) bad = true;
      }
    }
    Clause cl;
    cl.contradictory = bad;
    for (auto [v, s] : lits) cl.vars.push_back(v), cl.signs.push_back(s);
    out.clauses.push_back(std::move(cl));
    for (int p = t - 1; p >= 0; --p) {  // odometer over [m]^t
      if (++idx[p] < phi.m()) break;
      idx[p] = 0;
    }
  }
  return out;
}

DnfFormula random_dnf(int n, int m, int k, Rng& rng) {
  if (k > n || k < 1) throw ValidationError("random_dnf: need 1 <= k <= n");
  DnfFormula phi{n, k, {}};
  std::vector<int> perm(n);
  for (int i = 0; i < m; ++i) {
    std::iota(perm.begin(), perm.end(), 0);
    Clause c;
    for (int j = 0; j < k; ++j) {
      const int pick = j + static_cast<int>(rng.below(n - j));
      std::swap(perm[j], perm[pick]);
      c.vars.push_back(perm[j]);
      c.signs.push_back(rng.bernoulli(0.5) ? 1 : -1);
    }
    phi.clauses.push_back(std::move(c));
  }
  return phi;
}

AlignmentInstance gen_dnf_instance(const DnfFormula& phi, double beta) {
  phi.validate();
  if (phi.n > kMaxBruteForceVars) throw ValidationError("gen_dnf_instance: n too large for brute force");
  if (phi.n < 1 || phi.k < 1) throw ValidationError("gen_dnf_instance: empty formula");
  if (!(beta > 0.0)) throw ValidationError("gen_dnf_instance: beta must be positive");
  const int m = phi.m(), Y = m + 1, d = phi.n;
  const double eps_ref = std::exp(-1.0 / beta);

  AlignmentInstance inst;
  inst.num_prompts = 1;
  inst.num_responses = Y;
  inst.dim = d;
  inst.prompt_dist = Vec::Ones(1);
  inst.pi_ref.resize(1, Y);
  inst.pi_ref(0, 0) = 1.0 - eps_ref;
  for (int i = 1; i < Y; ++i) inst.pi_ref(0, i) = m > 0 ? eps_ref / m : 0.0;
  if (m == 0) inst.pi_ref(0, 0) = 1.0;
  inst.features = RowMat::Zero(Y, d);
  for (int i = 0; i < m; ++i) {
    const Clause& c = phi.clauses[i];
    if (c.contradictory) continue;  // unsatisfiable conjunction: zero feature, zero reward
    for (std::size_t l = 0; l < c.vars.size(); ++l) inst.features(i + 1, c.vars[l]) = static_cast<double>(c.signs[l]) / phi.k;
  }
  const DnfOptimum opt = dnf_opt(phi);
  inst.theta_star.resize(d);
  for (int j = 0; j < d; ++j) inst.theta_star[j] = opt.assignment[j];
  inst.reward_mean = (inst.features * inst.theta_star).transpose();
  inst.beta = beta;
  inst.r_max = 1.0;
  inst.param_radius = 1.0;
  inst.geometry = ParamGeometry::Box;
  inst.reward_lo = -1.0;
  inst.reward_hi = 1.0;
  inst.validate();
  return inst;
}

}  // namespace klx
