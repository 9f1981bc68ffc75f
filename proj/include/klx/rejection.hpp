#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "klx/oracle.hpp"
#include "klx/rng.hpp"

namespace klx {

struct RejectionConfig {
  double beta = 1.0;
  double m_threshold = 1.0;  // M
  double delta = 0.05;

  static RejectionConfig make(double beta, double m_threshold, double delta);
  void validate() const;
  std::uint64_t n_budget() const;  // ceil(4 M log(4 / delta))
};

struct RejectionOutcome {
  int response = -1;
  bool accepted = false;
  double log_density = 0.0;  // log rho = f(y)/beta - log Zhat
  double log_z_hat = 0.0;
  std::uint64_t queries_used = 0;
  std::uint64_t clamped = 0;  // rounds where e^{f/beta}/(Zhat M) exceeded 1

  double density() const { return std::exp(log_density); }
};

// Weak sampling oracle bound to one context (a prompt, or an MDP state).
class ProposalSource {
 public:
  virtual ~ProposalSource() = default;
  virtual int draw(Rng& rng) = 0;
  virtual void draw_counts(std::uint64_t n, Rng& rng, std::vector<std::uint64_t>& counts) = 0;
};

class PromptProposal final : public ProposalSource {
 public:
  PromptProposal(AlignmentOracle& oracle, int x) : oracle_(&oracle), x_(x) {}
  int draw(Rng& rng) override { return oracle_->weak_sample(x_, rng).response; }
  void draw_counts(std::uint64_t n, Rng& rng, std::vector<std::uint64_t>& counts) override {
    oracle_->weak_sample_counts(x_, n, rng, counts);
  }

 private:
  AlignmentOracle* oracle_;
  int x_;
};

class StateProposal final : public ProposalSource {
 public:
  StateProposal(MdpEnv& env, int h, int x) : env_(&env), h_(h), x_(x) {}
  int draw(Rng& rng) override { return env_->sample_action(h_, x_, rng); }
  void draw_counts(std::uint64_t n, Rng& rng, std::vector<std::uint64_t>& counts) override {
    env_->sample_action_counts(h_, x_, n, rng, counts);
  }

 private:
  MdpEnv* env_;
  int h_, x_;
};

// SoftmaxSampler. f(y) is only evaluated on sampled responses. The N normalization
// draws are taken as one histogram, which has the same law as N single draws.
template <class F>
RejectionOutcome softmax_sampler(F&& f, ProposalSource& src, const RejectionConfig& cfg, Rng& rng) {
  const std::uint64_t n = cfg.n_budget();
  Rng call = rng.split(rng());
  Rng norm_rng = call.split("normalize"), rej_rng = call.split("reject");
  RejectionOutcome out;

  std::vector<std::uint64_t> counts;
  src.draw_counts(n, norm_rng, counts);
  double m = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;  // log count + f / beta
  for (std::size_t y = 0; y < counts.size(); ++y) {
    if (!counts[y]) continue;
    const double t = std::log(static_cast<double>(counts[y])) + f(static_cast<int>(y)) / cfg.beta;
    terms.push_back(t);
    m = std::max(m, t);
  }
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  out.log_z_hat = m + std::log(s) - std::log(static_cast<double>(n));
  out.queries_used = n;

  const double log_scale = out.log_z_hat + std::log(cfg.m_threshold);
  for (std::uint64_t i = 0; i < n; ++i) {
    const int y = src.draw(rej_rng);
    ++out.queries_used;
    const double fy = f(y) / cfg.beta;
    double lp = fy - log_scale;
    if (lp > 0.0) ++out.clamped, lp = 0.0;
    if (rej_rng.uniform() < std::exp(lp)) {
      out.response = y;
      out.accepted = true;
      out.log_density = fy - out.log_z_hat;
      return out;
    }
  }
  out.response = src.draw(rej_rng);
  ++out.queries_used;
  out.log_density = f(out.response) / cfg.beta - out.log_z_hat;
  return out;
}

// SoftmaxSamplerDensity: identical law, plus the density estimate carried in the outcome.
template <class F>
RejectionOutcome softmax_sampler_density(F&& f, ProposalSource& src, const RejectionConfig& cfg, Rng& rng) {
  return softmax_sampler(std::forward<F>(f), src, cfg, rng);
}

}  // namespace klx
