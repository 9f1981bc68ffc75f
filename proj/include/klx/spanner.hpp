#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "klx/exact.hpp"
#include "klx/linalg.hpp"
#include "klx/oracle.hpp"
#include "klx/rejection.hpp"

namespace klx {

struct SpannerParams {
  int t_prompt = 0;
  int n_span = 0;
  int t_exp = 0;
  double eps_stat = 1.0;
  double nu = 1.0;
  double lambda = 1.0;
  double m_rej = 1.0;
  double delta_rej = 0.1;
  double c_stat = 1.0;

  // eps_stat = c sqrt(d R^2 log(B T_exp / (R delta))), nu = beta / eps_stat,
  // lambda = (R / B)^2, M_rej = 8 e^2 c_cov, delta_rej = 1 / T_exp.
  static SpannerParams derive(int d, double r_max, double B, double beta, int t_prompt, int n_span, int t_exp,
                              double c_stat, double c_cov, double delta);
  void validate() const;
  RejectionConfig rejection(double beta) const { return RejectionConfig::make(beta, m_rej, delta_rej); }
};

// T_prompt = prompt_scale (R / beta)^2 T_exp and n_span = span_scale C_cov T_exp, rounded up.
std::pair<int, int> proof_ratio_schedule(int t_exp, double beta, double r_max, double c_cov,
                                         double prompt_scale, double span_scale);

struct CoreTuple {
  int x, y1, y2;
  double r1, r2;
};

struct SpannerState {
  std::shared_ptr<DesignMatrix> design;
  std::vector<CoreTuple> core_set;  // Psi_span together with its labels (D_span)
  double nu = 1.0;
};

struct TruncatedPolicySnapshot {
  Vec theta;
  std::shared_ptr<const DesignMatrix> design;  // frozen Sigma_span
  double nu;
};

// <theta, phi(y) - phi(y')> if |phi(y) - phi(y')|_{Sigma^{-1}} <= nu, else 0.
double truncated_reward(const TruncatedPolicySnapshot& s, const VecRef& phi_y, const VecRef& phi_y2);

struct PolicyMixture {
  std::vector<TruncatedPolicySnapshot> snapshots;
  RejectionConfig sampler;
  bool empty() const { return snapshots.empty(); }
};

struct SpannerRound {
  int round;
  QueryLedger ledger;
  std::optional<double> estimation_error;  // |theta^t - theta*|_{Sigma_span}
  bool accepted;
  std::uint64_t clamped;
};

struct SpannerMetrics {
  QueryLedger ledger;
  std::size_t core_size = 0;
  std::vector<SpannerRound> rounds;
  std::vector<double> snapshot_regret;  // filled when an exact instance is attached
  std::optional<double> exact_regret;
};

struct SpannerResult {
  PolicyMixture mixture;
  SpannerState state;
  SpannerMetrics metrics;
};

SpannerState run_spanner_phase(AlignmentOracle& oracle, const SpannerParams& params, Rng& rng);
PolicyMixture run_exploration_phase(AlignmentOracle& oracle, const SpannerState& state, const SpannerParams& params,
                                    Rng& rng, std::vector<SpannerRound>* rounds = nullptr,
                                    const AlignmentInstance* exact = nullptr);
SpannerResult spanner_sampling(AlignmentOracle& oracle, const SpannerParams& params, Rng& rng,
                               const AlignmentInstance* exact = nullptr);

int sample_from_mixture(const PolicyMixture& mix, int x, AlignmentOracle& oracle, Rng& rng,
                        RejectionOutcome* detail = nullptr);

// Spanner size bound check: k <= 2 d log(1 + 4k / (d lambda)) / nu^2.
double spanner_size_bound(std::size_t k, int d, double lambda, double nu);

// Exact evaluation of snapshot policies, rejection-failure branch included.
class SnapshotEvaluator {
 public:
  SnapshotEvaluator(const AlignmentInstance& inst, const DesignMatrix& design, double nu, RejectionConfig sampler);

  PolicyTable marginal(const Vec& theta) const;  // y' ~ pi_ref, then the truncated sampler law
  // Conditional law of y given (x, y') under exact normalization, no rejection failure.
  Vec truncated_softmax(const Vec& theta, int x, int y2) const;
  double regret(const Vec& theta) const;
  double optimal_value() const { return opt_.value; }
  const OptimalSolution& optimal() const { return opt_; }
  bool inside(int x, int y, int y2) const { return mask_[(static_cast<std::size_t>(x) * Y_ + y) * Y_ + y2] != 0; }

  std::vector<double> regrets_parallel(const std::vector<TruncatedPolicySnapshot>& snaps) const;
  std::vector<double> regrets_serial(const std::vector<TruncatedPolicySnapshot>& snaps) const;

 private:
  const AlignmentInstance* inst_;
  int Y_;
  double nu_;
  RejectionConfig sampler_;
  std::vector<char> mask_;
  OptimalSolution opt_;
};

}  // namespace klx
