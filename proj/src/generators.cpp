#include "klx/generators.hpp"

#include <cmath>
#include <random>

#include "klx/errors.hpp"
#include "klx/exact.hpp"
#include "klx/rng.hpp"

namespace klx {

namespace {

Vec gaussian(int d, Rng& rng) {
  std::normal_distribution<double> n01;
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = n01(rng);
  return v;
}

Vec unit_sphere(int d, Rng& rng) {
  for (;;) {
    Vec v = gaussian(d, rng);
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

Vec unit_ball(int d, Rng& rng) { return unit_sphere(d, rng) * std::pow(rng.uniform(), 1.0 / d); }

Vec random_distribution(int n, double spread, Rng& rng) {
  Vec g = spread * gaussian(n, rng);
  Vec p = (g.array() - g.maxCoeff()).exp();
  return p / p.sum();
}

// Renormalize so the row sums to one within the validator's tolerance.
void normalize_row(Eigen::Ref<Vec> p) { p /= p.sum(); }

}  // namespace

AlignmentInstance gen_random_instance(int d, int n_prompts, int n_responses, double beta, double B,
                                      std::uint64_t seed, const RandomInstanceOptions& opt) {
  if (d < 1 || n_prompts < 1 || n_responses < 2) throw GenerationError("gen_random_instance: sizes too small");
  if (!(beta > 0.0) || beta > opt.r_max || opt.r_max > B)
    throw GenerationError("gen_random_instance: need 0 < beta <= r_max <= B");
  Rng rng(seed, "gen_random_instance");
  Rng feat_rng = rng.split("features"), theta_rng = rng.split("theta"), ref_rng = rng.split("pi_ref");

  AlignmentInstance inst;
  inst.num_prompts = n_prompts;
  inst.num_responses = n_responses;
  inst.dim = d;
  inst.prompt_dist = Vec::Constant(n_prompts, 1.0 / n_prompts);
  inst.features.resize(static_cast<Eigen::Index>(n_prompts) * n_responses, d);
  for (Eigen::Index i = 0; i < inst.features.rows(); ++i) inst.features.row(i) = unit_ball(d, feat_rng).transpose();
  inst.pi_ref.resize(n_prompts, n_responses);
  for (int x = 0; x < n_prompts; ++x) inst.pi_ref.row(x) = random_distribution(n_responses, opt.ref_spread, ref_rng).transpose();

  Vec theta = B * unit_sphere(d, theta_rng);
  double range = 0.0;
  for (int x = 0; x < n_prompts; ++x) {
    Vec lin = inst.features.middleRows(static_cast<Eigen::Index>(x) * n_responses, n_responses) * theta;
    range = std::max(range, lin.maxCoeff() - lin.minCoeff());
  }
  if (range > opt.r_max) theta *= opt.r_max / range;
  inst.theta_star = theta;

  inst.reward_mean.resize(n_prompts, n_responses);
  for (int x = 0; x < n_prompts; ++x) {
    Vec lin = inst.features.middleRows(static_cast<Eigen::Index>(x) * n_responses, n_responses) * theta;
    const double c = -lin.minCoeff();
    inst.reward_mean.row(x) = (lin.array() + c).min(opt.r_max).transpose();
  }
  inst.beta = beta;
  inst.r_max = opt.r_max;
  inst.param_radius = B;
  inst.reward_lo = 0.0;
  inst.reward_hi = opt.r_max;
  inst.noise = opt.noise;
  inst.validate();
  return inst;
}

double coverage_hard_eps_ref(double c_star, double beta) {
  return std::max(1.0 / c_star, std::exp(-1.0 / (2.0 * beta)));
}

AlignmentInstance gen_coverage_hard_instance(double c_star, int n_responses, double beta, int d, std::uint64_t seed) {
  if (!(c_star >= 2.0)) throw ValidationError("coverage instance: need c_star >= 2");
  if (n_responses < 9) throw ValidationError("coverage instance: need at least 9 responses");
  if (!(beta > 0.0) || beta > 0.5) throw ValidationError("coverage instance: need 0 < beta <= 1/2");
  if (d < 1) throw ValidationError("coverage instance: need d >= 1");
  Rng rng(seed, "gen_coverage_hard_instance");
  const double eps = coverage_hard_eps_ref(c_star, beta);
  const int y_star = 1 + static_cast<int>(rng.below(n_responses - 1));

  AlignmentInstance inst;
  inst.num_prompts = 1;
  inst.num_responses = n_responses;
  inst.dim = d;
  inst.prompt_dist = Vec::Ones(1);
  inst.pi_ref = RowMat::Zero(1, n_responses);
  inst.pi_ref(0, 0) = 1.0 - eps;
  inst.pi_ref(0, y_star) = eps;
  inst.theta_star = unit_sphere(d, rng);
  inst.features = RowMat::Zero(n_responses, d);
  inst.features.row(y_star) = inst.theta_star.transpose();
  inst.reward_mean = RowMat::Zero(1, n_responses);
  inst.reward_mean(0, y_star) = 1.0;
  inst.beta = beta;
  inst.r_max = 1.0;
  inst.param_radius = 1.0;
  inst.reward_lo = 0.0;
  inst.reward_hi = 1.0;
  inst.validate();

  const double c_cov = coverage_coefficients(inst, exact_optimal(inst).policy).c_cov;
  if (c_cov > c_star * (1.0 + 1e-12)) throw GenerationError("coverage instance: C_cov exceeds c_star");
  return inst;
}

int coverage_hard_target(const AlignmentInstance& inst) {
  for (int y = 0; y < inst.num_responses; ++y)
    if (inst.reward_mean(0, y) > 0.5) return y;
  throw ValidationError("coverage instance: no hidden response");
}

TokenMdp gen_autoregressive_gap_instance(double delta) {
  if (!(delta > 0.0 && delta < 0.5)) throw ValidationError("gap instance: delta must lie in (0, 1/2)");
  const double B = std::log(3.0 / delta);
  TokenMdp m;
  m.horizon = 2;
  m.num_actions = 2;
  m.dim = 2;
  m.num_states = {1, 2};
  m.initial = Vec::Ones(1);
  m.transitions = {RowMat::Identity(2, 2)};  // (state 0, token a) -> prefix state a
  m.features = {RowMat(2, 2), RowMat(4, 2)};
  m.features[0] << 1, 0, 1, 0;
  // layer 1 rows: (prefix, token) = (0,0), (0,1), (1,0), (1,1)
  m.features[1] << 0, 1, 0, 1, 1, 0, 0, 1;
  m.pi_ref = {RowMat::Constant(1, 2, 0.5), RowMat::Constant(2, 2, 0.5)};
  m.theta_star = {B * Vec::Unit(2, 0), B * Vec::Unit(2, 0)};
  m.reward_mean.resize(2);
  for (int h = 0; h < 2; ++h) {
    m.reward_mean[h].resize(m.num_states[h], 2);
    for (int x = 0; x < m.num_states[h]; ++x)
      for (int a = 0; a < 2; ++a) m.reward_mean[h](x, a) = m.theta_star[h].dot(m.feature(h, x, a));
  }
  m.beta = 1.0;
  m.r_max = B;
  m.param_radius = B;
  m.anchor = 0;
  m.realizable = false;
  m.validate();
  return m;
}

TokenMdp gen_token_mdp(int H, int A, int d, double beta, double B, std::uint64_t seed, bool realizable,
                       const TokenMdpOptions& opt) {
  if (H < 1 || A < 2 || d < 1 || opt.states_per_layer < 1) throw GenerationError("gen_token_mdp: sizes too small");
  if (static_cast<long long>(opt.states_per_layer) * A > 10000) throw GenerationError("gen_token_mdp: too many states");
  if (!(beta > 0.0) || beta > opt.r_max || opt.r_max > B) throw GenerationError("gen_token_mdp: need beta <= r_max <= B");
  Rng rng(seed, "gen_token_mdp");
  Rng feat_rng = rng.split("features"), trans_rng = rng.split("transitions"), ref_rng = rng.split("pi_ref"),
      theta_rng = rng.split("theta"), rew_rng = rng.split("rewards");
  const int S = opt.states_per_layer;

  TokenMdp m;
  m.horizon = H;
  m.num_actions = A;
  m.dim = d;
  m.num_states.assign(H, S);
  m.num_states[0] = S;
  m.initial = random_distribution(S, 1.0, trans_rng);
  normalize_row(m.initial);
  m.features.resize(H);
  m.pi_ref.resize(H);
  m.reward_mean.resize(H);
  m.transitions.resize(H - 1);
  for (int h = 0; h < H; ++h) {
    m.features[h].resize(S * A, d);
    for (int i = 0; i < S * A; ++i) m.features[h].row(i) = unit_ball(d, feat_rng).transpose();
    m.pi_ref[h].resize(S, A);
    for (int x = 0; x < S; ++x) m.pi_ref[h].row(x) = random_distribution(A, opt.ref_spread, ref_rng).transpose();
    if (h + 1 < H) {
      m.transitions[h].resize(S * A, S);
      for (int x = 0; x < S; ++x) {
        Vec shared = random_distribution(S, 1.5, trans_rng);
        for (int a = 0; a < A; ++a)
          m.transitions[h].row(x * A + a) = (realizable ? shared : random_distribution(S, 1.5, trans_rng)).transpose();
      }
    }
  }
  if (realizable) {
    m.theta_star.resize(H);
    for (int h = 0; h < H; ++h) {
      Vec theta = B * unit_sphere(d, theta_rng);
      double range = 0.0;
      for (int x = 0; x < S; ++x) {
        Vec lin = m.features[h].middleRows(x * A, A) * theta;
        range = std::max(range, lin.maxCoeff() - lin.minCoeff());
      }
      if (range > opt.r_max) theta *= opt.r_max / range;
      m.theta_star[h] = theta;
      m.reward_mean[h].resize(S, A);
      for (int x = 0; x < S; ++x) {
        Vec lin = m.features[h].middleRows(x * A, A) * theta;
        m.reward_mean[h].row(x) = (lin.array() - lin.minCoeff()).min(opt.r_max).transpose();
      }
    }
  } else {
    for (int h = 0; h < H; ++h) {
      m.reward_mean[h].resize(S, A);
      for (int x = 0; x < S; ++x)
        for (int a = 0; a < A; ++a) m.reward_mean[h](x, a) = opt.r_max * rew_rng.uniform();
    }
  }
  m.beta = beta;
  m.r_max = opt.r_max;
  m.param_radius = B;
  m.anchor = 0;
  m.noise = opt.noise;
  m.realizable = realizable;
  m.validate();
  return m;
}

AlignmentInstance bandit_from_mdp(const TokenMdp& mdp) {
  if (mdp.horizon != 1) throw ValidationError("bandit_from_mdp: horizon must be 1");
  AlignmentInstance inst;
  inst.num_prompts = mdp.num_states[0];
  inst.num_responses = mdp.num_actions;
  inst.dim = mdp.dim;
  inst.prompt_dist = mdp.initial;
  inst.pi_ref = mdp.pi_ref[0];
  inst.features = mdp.features[0];
  inst.theta_star = mdp.theta_star.empty() ? Vec::Zero(mdp.dim) : mdp.theta_star[0];
  inst.reward_mean = mdp.reward_mean[0];
  inst.beta = mdp.beta;
  inst.r_max = mdp.r_max;
  inst.param_radius = mdp.param_radius;
  inst.reward_lo = 0.0;
  inst.reward_hi = mdp.r_max;
  inst.noise = mdp.noise;
  return inst;
}

}  // namespace klx
