#pragma once

#include <cstdint>
#include <vector>

#include "klx/instance.hpp"
#include "klx/rng.hpp"

namespace klx {

struct QueryLedger {
  std::uint64_t t_data = 0;
  std::uint64_t t_comp_weak = 0;
  std::uint64_t t_comp_strong = 0;
  std::uint64_t t_prompt = 0;
  std::uint64_t resets = 0;

  friend bool operator==(const QueryLedger&, const QueryLedger&) = default;
  QueryLedger operator-(const QueryLedger& o) const {
    return {t_data - o.t_data, t_comp_weak - o.t_comp_weak, t_comp_strong - o.t_comp_strong,
            t_prompt - o.t_prompt, resets - o.resets};
  }
};

enum class OracleMode { Weak, Strong };

struct SampleDraw {
  int response;
  Eigen::Map<const Vec> feature;
};

// Noisy reward with the given mean, supported in [lo, hi].
double draw_reward(NoiseModel noise, double mean, double lo, double hi, Rng& rng);

// Single-owner access point to an AlignmentInstance. Every sampling call charges
// exactly one ledger counter per returned sample; reward queries charge t_data.
class AlignmentOracle {
 public:
  AlignmentOracle(const AlignmentInstance& inst, QueryLedger& ledger, Rng rng, OracleMode mode);

  int draw_prompt();
  SampleDraw weak_sample(int x);
  SampleDraw weak_sample(int x, Rng& rng);
  // Histogram of n weak draws at x; same law as n calls to weak_sample.
  void weak_sample_counts(int x, std::uint64_t n, Rng& rng, std::vector<std::uint64_t>& counts);
  SampleDraw strong_sample(int x, const Vec& theta);
  double reward_query(int x, int y);

  Eigen::Map<const Vec> feature(int x, int y) const { return {inst_->feature_ptr(x, y), inst_->dim}; }

  OracleMode mode() const { return mode_; }
  const QueryLedger& ledger() const { return *ledger_; }
  int num_prompts() const { return inst_->num_prompts; }
  int num_responses() const { return inst_->num_responses; }
  int dim() const { return inst_->dim; }
  double beta() const { return inst_->beta; }
  double r_max() const { return inst_->r_max; }
  ParamSet param_set() const { return inst_->param_set(); }
  // Only for simulators and exact-oracle metrics; learners must not read hidden tables.
  const AlignmentInstance& instance() const { return *inst_; }

 private:
  void check_prompt(int x) const;

  const AlignmentInstance* inst_;
  QueryLedger* ledger_;
  OracleMode mode_;
  Rng prompt_rng_, sample_rng_, reward_rng_;
  AliasTable prompt_table_;
  std::vector<AliasTable> ref_tables_;
};

// Episodic access to a TokenMdp with resets to previously visited states.
class MdpEnv {
 public:
  MdpEnv(const TokenMdp& mdp, QueryLedger& ledger, Rng rng);

  int start();                              // x_0 ~ P_0, charges t_prompt
  void reset(int h, int x);                 // charges resets; state must have been visited
  int step(int h, int x, int a);            // x_{h+1} ~ P_h(.|x, a)
  double reward(int h, int x, int a);       // charges t_data
  int sample_action(int h, int x, Rng& rng);  // a ~ pi_ref,h(.|x), charges t_comp_weak
  void sample_action_counts(int h, int x, std::uint64_t n, Rng& rng, std::vector<std::uint64_t>& counts);
  Eigen::Map<const Vec> feature(int h, int x, int a) const { return {mdp_->feature_ptr(h, x, a), mdp_->dim}; }

  bool visited(int h, int x) const { return visited_[h][x] != 0; }
  const TokenMdp& mdp() const { return *mdp_; }
  const QueryLedger& ledger() const { return *ledger_; }
  int horizon() const { return mdp_->horizon; }
  int num_actions() const { return mdp_->num_actions; }
  int dim() const { return mdp_->dim; }
  double beta() const { return mdp_->beta; }
  int anchor() const { return mdp_->anchor; }

 private:
  const TokenMdp* mdp_;
  QueryLedger* ledger_;
  Rng start_rng_, step_rng_, reward_rng_;
  AliasTable initial_table_;
  std::vector<std::vector<AliasTable>> step_tables_;  // [h][x * A + a]
  std::vector<std::vector<AliasTable>> ref_tables_;   // [h][x]
  std::vector<std::vector<char>> visited_;
};

}  // namespace klx
