#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "klx/exact.hpp"
#include "klx/linalg.hpp"
#include "klx/oracle.hpp"
#include "klx/rejection.hpp"

namespace klx {

// Layers in this module follow the algorithm's numbering: layer 0 is the seed
// layer and layer h >= 1 is MDP layer h - 1.
struct MtssParams {
  int t_iters = 1;
  int n_reg = 1;
  int n_span = 1;
  int n_span_bar = 1;
  double m_rej = 1.0;
  double delta_rej = 0.05;
  double nu = 0.5;
  double lambda = 1.0;
  double eps_reg = 1.0;
  double b_radius = 1.0;
  double c_log = 1.0;

  // T = 4 d H^2, N_reg = 2000, N_span = N_bar = 200, nu = 1/2, eps_reg^2 = eps,
  // lambda = eps / (c B^2), M_rej = 4 c_cond, delta_rej = eps / (H^2 B^3 T c) capped at 0.05.
  static MtssParams desk(int d, int H, double B, double eps, double c_log, double c_cond);
  void validate() const;
  RejectionConfig rejection(double beta) const { return RejectionConfig::make(beta, m_rej, delta_rej); }
};

struct StateAction {
  int x = 0;
  int a = 0;
  friend bool operator==(const StateAction&, const StateAction&) = default;
};

struct LayerSnapshot {
  Vec theta;
  std::shared_ptr<const DesignMatrix> design;
};

// Per-layer truncated softmax snapshots; index h - 1 holds layer h.
struct MtssPolicy {
  std::vector<LayerSnapshot> layers;
  double nu = 0.5;
  int anchor = 0;
  RejectionConfig sampler;
};

struct MtssState {
  std::vector<std::vector<StateAction>> core_sets;        // size H + 1, [0] is the seed pair
  std::vector<std::shared_ptr<DesignMatrix>> designs;     // size H + 1, [0] unused
  std::vector<Vec> thetas;                                // size H + 1, [0] unused
  int anchor = 0;
  std::optional<int> best_round;
};

struct MtssIteration {
  int round = 0;
  QueryLedger ledger;
  std::vector<std::size_t> core_sizes;           // layers 1..H
  std::vector<double> estimation_error;          // |theta_h - theta*_h|_{Sigma_h}, empty if theta* unknown
  double trigger = 0.0;                          // max_h |phi(x_h, a_h)|^2_{Sigma_h^{-1}}
  bool certified = false;
  std::optional<double> exact_regret;
};

struct MtssResult {
  MtssPolicy policy;
  bool certified = false;  // false: no round passed the trigger and policy is the last round
  int round = 0;
  MtssState state;
  std::vector<MtssIteration> iterations;
  QueryLedger ledger;
  std::optional<double> exact_regret;
};

// f(x, a) = <phi_bar(x, a), theta> with the anchored feature zeroed outside the nu-ball.
double truncated_value(const LayerSnapshot& s, double nu, const VecRef& anchored);

// Table of f over all (x, a) at MDP layer k, row-major S_k x A.
RowMat truncated_value_table(const TokenMdp& mdp, int k, const LayerSnapshot& s, double nu);

// One draw from the layer-h snapshot policy at state x. Returns (action, log rho).
std::pair<int, double> truncated_action_sample(const LayerSnapshot& s, double nu, int h, int x, MdpEnv& env,
                                               const RejectionConfig& cfg, Rng& rng);

Vec fit_value(int h, const std::vector<StateAction>& core, const std::vector<LayerSnapshot>& future,
              const MtssParams& p, MdpEnv& env, Rng& rng);

StateAction uncertain_state_action(int h, const std::vector<std::vector<StateAction>>& core_sets,
                                   const std::vector<LayerSnapshot>& policy, const DesignMatrix& design,
                                   const MtssParams& p, MdpEnv& env, Rng& rng);

MtssResult mtss(MdpEnv& env, const MtssParams& p, Rng rng, bool exact_metrics = false);

// Exact law of the snapshot policy, with the sampler's failure branch included.
MdpPolicy mtss_policy_law(const TokenMdp& mdp, const MtssPolicy& pi);
double mtss_exact_regret(const TokenMdp& mdp, const MtssPolicy& pi);

// max_{h,x,a} pi*_h(a|x) / pi_ref,h(a|x)
double exact_c_cond(const TokenMdp& mdp);

// Analytic reset count of a full run that keeps every core set paired.
std::uint64_t predicted_resets(const MtssParams& p, int H);

}  // namespace klx
