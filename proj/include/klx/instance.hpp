#pragma once

#include <string>
#include <vector>

#include "klx/linalg.hpp"

namespace klx {

enum class NoiseModel { Deterministic, UniformBounded, Bernoulli };

const char* to_string(NoiseModel m);
NoiseModel noise_from_string(const std::string& s);
const char* to_string(ParamGeometry g);
ParamGeometry geometry_from_string(const std::string& s);

// Enumerable contextual bandit. Prompt x in [0, X), response y in [0, Y).
// Feature of (x, y) lives in row x * Y + y of `features`.
struct AlignmentInstance {
  int num_prompts = 0;
  int num_responses = 0;
  int dim = 0;
  Vec prompt_dist;   // rho, size X
  RowMat pi_ref;     // X x Y
  RowMat features;   // (X * Y) x d
  Vec theta_star;    // d
  RowMat reward_mean;  // r*(x, y), X x Y
  double beta = 1.0;
  double r_max = 1.0;
  double param_radius = 1.0;
  ParamGeometry geometry = ParamGeometry::Ball;
  // Observed rewards live in [reward_lo, reward_hi]; [0, r_max] except for the DNF embedding.
  double reward_lo = 0.0;
  double reward_hi = 1.0;
  NoiseModel noise = NoiseModel::Deterministic;

  auto feature(int x, int y) const { return features.row(x * num_responses + y).transpose(); }
  const double* feature_ptr(int x, int y) const {
    return features.data() + (static_cast<std::ptrdiff_t>(x) * num_responses + y) * dim;
  }
  ParamSet param_set() const { return {geometry, param_radius}; }

  void validate() const;  // throws ValidationError
};

// Finite-horizon MDP with layers h = 0..H-1. Layer h has S_h states and A actions.
struct TokenMdp {
  int horizon = 0;
  int num_actions = 0;
  int dim = 0;
  std::vector<int> num_states;          // S_h
  Vec initial;                          // over layer-0 states
  std::vector<RowMat> transitions;      // h < H-1: (S_h * A) x S_{h+1}
  std::vector<RowMat> reward_mean;      // S_h x A
  std::vector<RowMat> features;         // (S_h * A) x d
  std::vector<RowMat> pi_ref;           // S_h x A
  std::vector<Vec> theta_star;          // per layer when known, else empty
  double beta = 1.0;
  double r_max = 1.0;
  double param_radius = 1.0;
  int anchor = 0;
  NoiseModel noise = NoiseModel::Deterministic;
  bool realizable = false;

  auto feature(int h, int x, int a) const { return features[h].row(x * num_actions + a).transpose(); }
  const double* feature_ptr(int h, int x, int a) const {
    return features[h].data() + (static_cast<std::ptrdiff_t>(x) * num_actions + a) * dim;
  }
  // phi_h(x, a) - phi_h(x, anchor)
  Vec anchored_feature(int h, int x, int a) const { return feature(h, x, a) - feature(h, x, anchor); }

  void validate() const;
};

}  // namespace klx
