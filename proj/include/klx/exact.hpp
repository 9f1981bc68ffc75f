#pragma once

#include <variant>
#include <vector>

#include "klx/instance.hpp"

namespace klx {

struct KahanSum {
  double sum = 0.0, c = 0.0;
  void add(double v) {
    const double y = v - c;
    const double t = sum + y;
    c = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
};

struct InfiniteKl {
  friend bool operator==(InfiniteKl, InfiniteKl) { return true; }
};
// A regularized value or KL that is either finite or +infinity-KL (mass off the support of pi_ref).
using RegularizedValue = std::variant<double, InfiniteKl>;
inline bool is_finite(const RegularizedValue& v) { return std::holds_alternative<double>(v); }
double finite_or_throw(const RegularizedValue& v);

struct SoftmaxRow {
  Vec probs;
  double log_z;  // log E_{y~pi_ref}[exp(f(y)/beta)]
  double z() const;
};

SoftmaxRow softmax_row(const VecRef& pi_ref, const VecRef& f, double beta);
// f is an X x Y table of reward-like values.
SoftmaxRow exact_softmax(const AlignmentInstance& inst, const RowMat& f, int x);

using PolicyTable = RowMat;  // X x Y conditional distributions

void validate_policy(const AlignmentInstance& inst, const PolicyTable& pi);
RowMat linear_reward_table(const AlignmentInstance& inst, const Vec& theta);

struct OptimalSolution {
  PolicyTable policy;
  double value;
  Vec log_z;  // per prompt
};

OptimalSolution exact_optimal(const AlignmentInstance& inst);
RegularizedValue exact_jbeta(const AlignmentInstance& inst, const PolicyTable& pi);
double expected_reward(const AlignmentInstance& inst, const PolicyTable& pi);
RegularizedValue kl_divergence(const AlignmentInstance& inst, const PolicyTable& p, const PolicyTable& q);

struct CoverageResult {
  double c_cov;
  Vec per_prompt;  // sup_y pi/pi_ref at each x
};
CoverageResult coverage_coefficients(const AlignmentInstance& inst, const PolicyTable& pi);

// Law of the rejection sampler with the normalizer replaced by its exact value:
// accept prob p(y) = min(1, e^{f/beta} / (Z M)), N rounds, fresh pi_ref draw on failure.
Vec rejection_law(const VecRef& pi_ref, const VecRef& f, double beta, double m_threshold, std::uint64_t n_budget);

// Parallel enumeration kernels; the `_serial` twins are the reference for tests and benchmarks.
PolicyTable policy_table(const AlignmentInstance& inst, const RowMat& f);
PolicyTable policy_table_serial(const AlignmentInstance& inst, const RowMat& f);
RegularizedValue jbeta_parallel(const AlignmentInstance& inst, const PolicyTable& pi);
RegularizedValue jbeta_serial(const AlignmentInstance& inst, const PolicyTable& pi);

// ---- MDPs ----

using MdpPolicy = std::vector<RowMat>;  // per layer, S_h x A

struct QTables {
  std::vector<RowMat> q;  // S_h x A
  std::vector<Vec> v;     // S_h
  double beta = 1.0;
};

QTables exact_qstar(const TokenMdp& mdp);
MdpPolicy softmax_policy(const TokenMdp& mdp, const QTables& q);  // pi_h ~ pi_ref,h e^{Q_h / beta}
double initial_value(const TokenMdp& mdp, const QTables& q);       // E_{x ~ P_0} V_0(x)

std::variant<QTables, InfiniteKl> exact_qpi(const TokenMdp& mdp, const MdpPolicy& pi);
// Forward-occupancy evaluation of J_beta, independent of the Q recursion.
RegularizedValue mdp_jbeta(const TokenMdp& mdp, const MdpPolicy& pi);
std::vector<Vec> state_occupancy(const TokenMdp& mdp, const MdpPolicy& pi);

struct PerformanceDifference {
  double lhs, rhs, residual;
};
PerformanceDifference performance_difference_check(const TokenMdp& mdp, const MdpPolicy& pi,
                                                   const MdpPolicy& pi_prime);

// max |Q*_h(x,a) - Q*_h(x,anchor) - <theta*_h, phi_h(x,a) - phi_h(x,anchor)>|
double value_difference_residual(const TokenMdp& mdp, const QTables& qstar);
// max_h,x |V_h(x) - beta log sum_a pi_ref e^{Q_h/beta}|
double soft_bellman_residual(const TokenMdp& mdp, const QTables& q);

}  // namespace klx
