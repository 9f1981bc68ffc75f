#pragma once

#include <cstdint>

#include "klx/instance.hpp"

namespace klx {

struct RandomInstanceOptions {
  double r_max = 1.0;
  double ref_spread = 1.0;  // pi_ref(.|x) = softmax(ref_spread * N(0, I))
  NoiseModel noise = NoiseModel::Deterministic;
};

AlignmentInstance gen_random_instance(int d, int n_prompts, int n_responses, double beta, double B,
                                      std::uint64_t seed, const RandomInstanceOptions& opt = {});

double coverage_hard_eps_ref(double c_star, double beta);
AlignmentInstance gen_coverage_hard_instance(double c_star, int n_responses, double beta, int d,
                                             std::uint64_t seed);
int coverage_hard_target(const AlignmentInstance& inst);  // the hidden response y*

// H = 2, A = 2, d = 2, beta = 1, B = log(3 / delta). Token indices are 0-based here,
// so the 1-based sequence (2, 1) is (1, 0).
TokenMdp gen_autoregressive_gap_instance(double delta);

struct TokenMdpOptions {
  int states_per_layer = 4;
  double r_max = 1.0;
  double ref_spread = 1.0;
  NoiseModel noise = NoiseModel::Deterministic;
};

TokenMdp gen_token_mdp(int H, int A, int d, double beta, double B, std::uint64_t seed, bool realizable,
                       const TokenMdpOptions& opt = {});

// Horizon-one MDP viewed as a bandit with responses = actions, prompts = initial states.
AlignmentInstance bandit_from_mdp(const TokenMdp& mdp);

}  // namespace klx
