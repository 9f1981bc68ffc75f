#include "klx/oracle.hpp"

#include <cmath>
#include <fmt/format.h>

#include "klx/errors.hpp"
#include "klx/exact.hpp"

namespace klx {

double draw_reward(NoiseModel noise, double mean, double lo, double hi, Rng& rng) {
  switch (noise) {
    case NoiseModel::Deterministic:
      return mean;
    case NoiseModel::UniformBounded: {
      const double w = std::min(mean - lo, hi - mean);
      return mean + w * (2.0 * rng.uniform() - 1.0);
    }
    case NoiseModel::Bernoulli: {
      const double p = (mean - lo) / (hi - lo);
      return rng.bernoulli(p) ? hi : lo;
    }
  }
  return mean;
}

AlignmentOracle::AlignmentOracle(const AlignmentInstance& inst, QueryLedger& ledger, Rng rng,
                                 OracleMode mode)
    : inst_(&inst),
      ledger_(&ledger),
      mode_(mode),
      prompt_rng_(rng.split("prompt")),
      sample_rng_(rng.split("sample")),
      reward_rng_(rng.split("reward")),
      prompt_table_(std::span<const double>(inst.prompt_dist.data(), inst.prompt_dist.size())) {
  ref_tables_.reserve(inst.num_prompts);
  for (int x = 0; x < inst.num_prompts; ++x)
    ref_tables_.emplace_back(std::span<const double>(inst.pi_ref.row(x).data(), inst.num_responses));
}

void AlignmentOracle::check_prompt(int x) const {
  if (x < 0 || x >= inst_->num_prompts) throw ValidationError(fmt::format("oracle: unknown prompt {}", x));
}

int AlignmentOracle::draw_prompt() {
  ++ledger_->t_prompt;
  return prompt_table_.sample(prompt_rng_);
}

SampleDraw AlignmentOracle::weak_sample(int x) { return weak_sample(x, sample_rng_); }

SampleDraw AlignmentOracle::weak_sample(int x, Rng& rng) {
  check_prompt(x);
  ++ledger_->t_comp_weak;
  const int y = ref_tables_[x].sample(rng);
  return {y, feature(x, y)};
}

void AlignmentOracle::weak_sample_counts(int x, std::uint64_t n, Rng& rng, std::vector<std::uint64_t>& counts) {
  check_prompt(x);
  ledger_->t_comp_weak += n;
  sample_multinomial(n, ref_tables_[x].probabilities(), rng, counts);
}

SampleDraw AlignmentOracle::strong_sample(int x, const Vec& theta) {
  if (mode_ != OracleMode::Strong) throw CapabilityError("oracle: strong query on a weak handle");
  check_prompt(x);
  if (theta.size() != inst_->dim || !theta.allFinite()) throw ValidationError("oracle: bad theta");
  if (!inst_->param_set().contains(theta, 1e-9)) throw ValidationError("oracle: theta outside Theta");
  ++ledger_->t_comp_strong;
  Vec logits = inst_->features.middleRows(static_cast<Eigen::Index>(x) * inst_->num_responses,
                                          inst_->num_responses) * theta;
  const SoftmaxRow row = softmax_row(inst_->pi_ref.row(x).transpose(), logits, inst_->beta);
  // inverse CDF on the exact table
  const double u = sample_rng_.uniform();
  double acc = 0.0;
  int y = inst_->num_responses - 1;
  for (int i = 0; i < inst_->num_responses; ++i) {
    acc += row.probs[i];
    if (u < acc) { y = i; break; }
  }
  while (row.probs[y] == 0.0 && y > 0) --y;
  return {y, feature(x, y)};
}

double AlignmentOracle::reward_query(int x, int y) {
  check_prompt(x);
  if (y < 0 || y >= inst_->num_responses) throw ValidationError("oracle: unknown response");
  ++ledger_->t_data;
  return draw_reward(inst_->noise, inst_->reward_mean(x, y), inst_->reward_lo, inst_->reward_hi, reward_rng_);
}

MdpEnv::MdpEnv(const TokenMdp& mdp, QueryLedger& ledger, Rng rng)
    : mdp_(&mdp),
      ledger_(&ledger),
      start_rng_(rng.split("start")),
      step_rng_(rng.split("step")),
      reward_rng_(rng.split("reward")),
      initial_table_(std::span<const double>(mdp.initial.data(), mdp.initial.size())) {
  const int H = mdp.horizon, A = mdp.num_actions;
  step_tables_.resize(H);
  ref_tables_.resize(H);
  visited_.resize(H);
  for (int h = 0; h < H; ++h) {
    visited_[h].assign(mdp.num_states[h], 0);
    for (int x = 0; x < mdp.num_states[h]; ++x)
      ref_tables_[h].emplace_back(std::span<const double>(mdp.pi_ref[h].row(x).data(), A));
    if (h + 1 < H)
      for (Eigen::Index i = 0; i < mdp.transitions[h].rows(); ++i)
        step_tables_[h].emplace_back(std::span<const double>(mdp.transitions[h].row(i).data(), mdp.num_states[h + 1]));
  }
}

int MdpEnv::start() {
  ++ledger_->t_prompt;
  const int x = initial_table_.sample(start_rng_);
  visited_[0][x] = 1;
  return x;
}

void MdpEnv::reset(int h, int x) {
  if (h < 0 || h >= mdp_->horizon || x < 0 || x >= mdp_->num_states[h] || !visited_[h][x])
    throw EnvironmentError(fmt::format("env: reset to unvisited state ({}, {})", h, x));
  ++ledger_->resets;
}

int MdpEnv::step(int h, int x, int a) {
  if (h + 1 >= mdp_->horizon) throw EnvironmentError("env: step past the horizon");
  const int nx = step_tables_[h][x * mdp_->num_actions + a].sample(step_rng_);
  visited_[h + 1][nx] = 1;
  return nx;
}

double MdpEnv::reward(int h, int x, int a) {
  ++ledger_->t_data;
  return draw_reward(mdp_->noise, mdp_->reward_mean[h](x, a), 0.0, mdp_->r_max, reward_rng_);
}

int MdpEnv::sample_action(int h, int x, Rng& rng) {
  ++ledger_->t_comp_weak;
  return ref_tables_[h][x].sample(rng);
}

void MdpEnv::sample_action_counts(int h, int x, std::uint64_t n, Rng& rng, std::vector<std::uint64_t>& counts) {
  ledger_->t_comp_weak += n;
  sample_multinomial(n, ref_tables_[h][x].probabilities(), rng, counts);
}

}  // namespace klx
