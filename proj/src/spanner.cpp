#include "klx/spanner.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "klx/errors.hpp"

namespace klx {

SpannerParams SpannerParams::derive(int d, double r_max, double B, double beta, int t_prompt, int n_span, int t_exp,
                                    double c_stat, double c_cov, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("spanner: delta must lie in (0, 1)");
  SpannerParams p;
  p.t_prompt = t_prompt;
  p.n_span = n_span;
  p.t_exp = t_exp;
  p.c_stat = c_stat;
  p.eps_stat = c_stat * std::sqrt(d * r_max * r_max * std::log(B / r_max / delta * t_exp));
  p.nu = beta / p.eps_stat;
  p.lambda = (r_max / B) * (r_max / B);
  p.m_rej = 8.0 * std::numbers::e * std::numbers::e * c_cov;
  p.delta_rej = 1.0 / t_exp;
  p.validate();
  return p;
}

void SpannerParams::validate() const {
  if (t_prompt < 0 || n_span < 0 || t_exp < 1) throw ValidationError("spanner: bad round counts");
  if (!(nu > 0.0) || !(lambda > 0.0) || !(m_rej > 0.0)) throw ValidationError("spanner: nu, lambda, M_rej must be positive");
  if (!(delta_rej > 0.0 && delta_rej < 1.0)) throw ValidationError("spanner: delta_rej must lie in (0, 1)");
}

std::pair<int, int> proof_ratio_schedule(int t_exp, double beta, double r_max, double c_cov, double prompt_scale,
                                         double span_scale) {
  const double tp = std::ceil(prompt_scale * (r_max / beta) * (r_max / beta) * t_exp);
  const double ns = std::ceil(span_scale * c_cov * t_exp);
  if (tp > 1e9 || ns > 1e9) throw ValidationError("spanner schedule: phase sizes too large");
  return {static_cast<int>(tp), static_cast<int>(std::max(1.0, ns))};
}

double truncated_reward(const TruncatedPolicySnapshot& s, const VecRef& phi_y, const VecRef& phi_y2) {
  const Vec diff = phi_y - phi_y2;
  if (s.design->mahalanobis(diff) > s.nu) return 0.0;
  return s.theta.dot(diff);
}

double spanner_size_bound(std::size_t k, int d, double lambda, double nu) {
  return 2.0 * d * std::log(1.0 + 4.0 * static_cast<double>(k) / (d * lambda)) / (nu * nu);
}

SpannerState run_spanner_phase(AlignmentOracle& oracle, const SpannerParams& params, Rng& rng) {
  params.validate();
  const int d = oracle.dim(), Y = oracle.num_responses(), X = oracle.num_prompts();
  SpannerState st{std::make_shared<DesignMatrix>(d, params.lambda), {}, params.nu};
  Rng draw_rng = rng.split("span-draw");

  // Pair norms computed for the current Sigma; cleared whenever Sigma changes.
  const std::size_t cache_size = static_cast<std::size_t>(X) * Y * Y;
  const bool use_cache = cache_size <= (std::size_t{1} << 22);
  std::vector<double> cache(use_cache ? cache_size : 0, -1.0);
  Vec diff(d);

  for (int t = 0; t < params.t_prompt; ++t) {
    const int x = oracle.draw_prompt();
    for (int i = 0; i < params.n_span; ++i) {
      const SampleDraw a = oracle.weak_sample(x, draw_rng);
      const SampleDraw b = oracle.weak_sample(x, draw_rng);
      double norm;
      double* slot = use_cache ? &cache[(static_cast<std::size_t>(x) * Y + a.response) * Y + b.response] : nullptr;
      if (slot && *slot >= 0.0) {
        norm = *slot;
      } else {
        diff = a.feature - b.feature;
        norm = st.design->mahalanobis(diff);
        if (slot) *slot = norm;
      }
      if (norm > params.nu) {
        const double r1 = oracle.reward_query(x, a.response);
        const double r2 = oracle.reward_query(x, b.response);
        st.core_set.push_back({x, a.response, b.response, r1, r2});
        st.design->rank_one_update(a.feature - b.feature);
        if (use_cache) std::fill(cache.begin(), cache.end(), -1.0);
        break;
      }
    }
  }
  return st;
}

PolicyMixture run_exploration_phase(AlignmentOracle& oracle, const SpannerState& state, const SpannerParams& params,
                                    Rng& rng, std::vector<SpannerRound>* rounds, const AlignmentInstance* exact) {
  params.validate();
  const int d = oracle.dim();
  PolicyMixture mix{{}, params.rejection(oracle.beta())};
  mix.snapshots.reserve(params.t_exp);
  std::shared_ptr<const DesignMatrix> frozen = state.design;

  RegressionSet data(d);
  for (const CoreTuple& c : state.core_set)
    data.add(oracle.feature(c.x, c.y1) - oracle.feature(c.x, c.y2), c.r1 - c.r2);

  Rng draw_rng = rng.split("exp-draw");
  Rng sampler_rng = rng.split("exp-sampler");
  const ParamSet theta_set = oracle.param_set();

  for (int t = 0; t < params.t_exp; ++t) {
    TruncatedPolicySnapshot snap{projected_least_squares(data, params.lambda, theta_set), frozen, params.nu};
    const int x = oracle.draw_prompt();
    const SampleDraw second = oracle.weak_sample(x, draw_rng);
    const int y2 = second.response;
    const double r2 = oracle.reward_query(x, y2);

    PromptProposal proposal(oracle, x);
    auto f = [&](int y) { return truncated_reward(snap, oracle.feature(x, y), oracle.feature(x, y2)); };
    const RejectionOutcome out = softmax_sampler(f, proposal, mix.sampler, sampler_rng);
    const double r1 = oracle.reward_query(x, out.response);
    data.add(oracle.feature(x, out.response) - oracle.feature(x, y2), r1 - r2);

    if (rounds) {
      SpannerRound rec{t + 1, oracle.ledger(), std::nullopt, out.accepted, out.clamped};
      if (exact) {
        const Vec e = snap.theta - exact->theta_star;
        rec.estimation_error = std::sqrt(std::max(0.0, e.dot(frozen->sigma() * e)));
      }
      rounds->push_back(rec);
    }
    mix.snapshots.push_back(std::move(snap));
  }
  return mix;
}

SpannerResult spanner_sampling(AlignmentOracle& oracle, const SpannerParams& params, Rng& rng,
                               const AlignmentInstance* exact) {
  if (oracle.mode() != OracleMode::Weak) throw CapabilityError("spanner_sampling runs on a weak oracle");
  SpannerResult res;
  Rng span_rng = rng.split("spanner-phase"), exp_rng = rng.split("exploration-phase");
  res.state = run_spanner_phase(oracle, params, span_rng);
  res.mixture = run_exploration_phase(oracle, res.state, params, exp_rng, &res.metrics.rounds, exact);
  res.metrics.ledger = oracle.ledger();
  res.metrics.core_size = res.state.core_set.size();
  if (exact) {
    SnapshotEvaluator eval(*exact, *res.state.design, params.nu, res.mixture.sampler);
    res.metrics.snapshot_regret = eval.regrets_parallel(res.mixture.snapshots);
    KahanSum s;
    for (double r : res.metrics.snapshot_regret) s.add(r);
    res.metrics.exact_regret = s.value() / static_cast<double>(res.metrics.snapshot_regret.size());
  }
  return res;
}

int sample_from_mixture(const PolicyMixture& mix, int x, AlignmentOracle& oracle, Rng& rng, RejectionOutcome* detail) {
  if (mix.empty()) throw ValidationError("sample_from_mixture: empty mixture");
  const TruncatedPolicySnapshot& snap = mix.snapshots[rng.below(mix.snapshots.size())];
  const int y2 = oracle.weak_sample(x, rng).response;
  PromptProposal proposal(oracle, x);
  auto f = [&](int y) { return truncated_reward(snap, oracle.feature(x, y), oracle.feature(x, y2)); };
  RejectionOutcome out = softmax_sampler(f, proposal, mix.sampler, rng);
  ++out.queries_used;  // the y' draw
  if (detail) *detail = out;
  return out.response;
}

SnapshotEvaluator::SnapshotEvaluator(const AlignmentInstance& inst, const DesignMatrix& design, double nu,
                                     RejectionConfig sampler)
    : inst_(&inst), Y_(inst.num_responses), nu_(nu), sampler_(sampler), opt_(exact_optimal(inst)) {
  const int X = inst.num_prompts;
  mask_.assign(static_cast<std::size_t>(X) * Y_ * Y_, 0);
  for (int x = 0; x < X; ++x)
    for (int y = 0; y < Y_; ++y)
      for (int y2 = 0; y2 < Y_; ++y2) {
        const Vec diff = inst.feature(x, y) - inst.feature(x, y2);
        mask_[(static_cast<std::size_t>(x) * Y_ + y) * Y_ + y2] = design.mahalanobis(diff) <= nu ? 1 : 0;
      }
}

Vec SnapshotEvaluator::truncated_softmax(const Vec& theta, int x, int y2) const {
  const Vec lin = inst_->features.middleRows(static_cast<Eigen::Index>(x) * Y_, Y_) * theta;
  Vec f(Y_);
  for (int y = 0; y < Y_; ++y) f[y] = inside(x, y, y2) ? lin[y] - lin[y2] : 0.0;
  return softmax_row(inst_->pi_ref.row(x).transpose(), f, inst_->beta).probs;
}

PolicyTable SnapshotEvaluator::marginal(const Vec& theta) const {
  const int X = inst_->num_prompts;
  const std::uint64_t n = sampler_.n_budget();
  PolicyTable out = PolicyTable::Zero(X, Y_);
  Vec f(Y_);
  for (int x = 0; x < X; ++x) {
    const Vec lin = inst_->features.middleRows(static_cast<Eigen::Index>(x) * Y_, Y_) * theta;
    const Vec ref = inst_->pi_ref.row(x).transpose();
    for (int y2 = 0; y2 < Y_; ++y2) {
      if (ref[y2] <= 0.0) continue;
      for (int y = 0; y < Y_; ++y) f[y] = inside(x, y, y2) ? lin[y] - lin[y2] : 0.0;
      out.row(x) += ref[y2] * rejection_law(ref, f, inst_->beta, sampler_.m_threshold, n).transpose();
    }
    out.row(x) /= out.row(x).sum();
  }
  return out;
}

double SnapshotEvaluator::regret(const Vec& theta) const {
  return opt_.value - finite_or_throw(jbeta_serial(*inst_, marginal(theta)));
}

std::vector<double> SnapshotEvaluator::regrets_serial(const std::vector<TruncatedPolicySnapshot>& snaps) const {
  std::vector<double> out(snaps.size());
  for (std::size_t i = 0; i < snaps.size(); ++i) out[i] = regret(snaps[i].theta);
  return out;
}

std::vector<double> SnapshotEvaluator::regrets_parallel(const std::vector<TruncatedPolicySnapshot>& snaps) const {
  std::vector<double> out(snaps.size());
  const long n = static_cast<long>(snaps.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (long i = 0; i < n; ++i) out[i] = regret(snaps[i].theta);
  return out;
}

}  // namespace klx
