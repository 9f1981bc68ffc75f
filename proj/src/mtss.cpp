#include "klx/mtss.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "klx/errors.hpp"

namespace klx {

MtssParams MtssParams::desk(int d, int H, double B, double eps, double c_log, double c_cond) {
  if (d < 1 || H < 1 || !(B > 0.0) || !(eps > 0.0) || !(c_log > 0.0) || !(c_cond >= 1.0))
    throw ValidationError("mtss: bad desk preset arguments");
  MtssParams p;
  p.t_iters = 4 * d * H * H;
  p.n_reg = 2000;
  p.n_span = 200;
  p.n_span_bar = 200;
  p.nu = 0.5;
  p.eps_reg = std::sqrt(eps);
  p.b_radius = B;
  p.c_log = c_log;
  p.lambda = eps / (c_log * B * B);
  p.m_rej = 4.0 * c_cond;
  p.delta_rej = std::min(0.05, eps / (H * H * B * B * B * p.t_iters * c_log));
  return p;
}

void MtssParams::validate() const {
  if (t_iters < 1 || n_reg < 1 || n_span < 1 || n_span_bar < 0)
    throw ValidationError("mtss: iteration and rollout counts must be positive");
  if (!(nu > 0.0) || !(lambda > 0.0) || !(b_radius > 0.0) || !(eps_reg > 0.0) || !(c_log > 0.0))
    throw ValidationError("mtss: nu, lambda, B, eps_reg and c must be positive");
  RejectionConfig::make(1.0, m_rej, delta_rej);
}

double truncated_value(const LayerSnapshot& s, double nu, const VecRef& anchored) {
  if (s.design->mahalanobis_sq(anchored) > nu * nu) return 0.0;
  return anchored.dot(s.theta);
}

RowMat truncated_value_table(const TokenMdp& mdp, int k, const LayerSnapshot& s, double nu) {
  const int S = mdp.num_states[k], A = mdp.num_actions;
  RowMat f = RowMat::Zero(S, A);
  if (s.theta.size() == 0 || s.theta.isZero(0.0)) return f;
  for (int x = 0; x < S; ++x)
    for (int a = 0; a < A; ++a)
      if (a != mdp.anchor) f(x, a) = truncated_value(s, nu, mdp.anchored_feature(k, x, a));
  return f;
}

namespace {

std::pair<int, double> sample_row(const double* f, int k, int x, MdpEnv& env, const RejectionConfig& cfg,
                                  Rng& rng) {
  StateProposal src(env, k, x);
  const RejectionOutcome o = softmax_sampler_density([f](int a) { return f[a]; }, src, cfg, rng);
  return {o.response, o.log_density};
}

std::vector<RowMat> value_tables(const TokenMdp& mdp, const std::vector<LayerSnapshot>& policy, int from, int to,
                                 double nu) {
  std::vector<RowMat> t(mdp.horizon);
  for (int h = from; h <= to; ++h) t[h - 1] = truncated_value_table(mdp, h - 1, policy[h - 1], nu);
  return t;
}

}  // namespace

std::pair<int, double> truncated_action_sample(const LayerSnapshot& s, double nu, int h, int x, MdpEnv& env,
                                               const RejectionConfig& cfg, Rng& rng) {
  const TokenMdp& mdp = env.mdp();
  const int k = h - 1;
  auto f = [&](int a) { return a == mdp.anchor ? 0.0 : truncated_value(s, nu, mdp.anchored_feature(k, x, a)); };
  StateProposal src(env, k, x);
  const RejectionOutcome o = softmax_sampler_density(f, src, cfg, rng);
  return {o.response, o.log_density};
}

Vec fit_value(int h, const std::vector<StateAction>& core, const std::vector<LayerSnapshot>& future,
              const MtssParams& p, MdpEnv& env, Rng& rng) {
  const TokenMdp& mdp = env.mdp();
  const int H = mdp.horizon, k = h - 1;
  if (core.empty()) return Vec::Zero(mdp.dim);
  const std::vector<RowMat> f = value_tables(mdp, future, h + 1, H, p.nu);
  const RejectionConfig cfg = p.rejection(mdp.beta);
  const int A = mdp.num_actions;

  // Sum of (r - beta log rho) over layers after k along one rollout from (x, a).
  auto rollout = [&](int x, int a, Rng& r) {
    env.reset(k, x);
    double y = 0.0;
    for (int m = k + 1; m < H; ++m) {
      x = env.step(m - 1, x, a);
      const auto [next, log_rho] = sample_row(f[m].data() + x * A, m, x, env, cfg, r);
      a = next;
      y += env.reward(m, x, a) - mdp.beta * log_rho;
    }
    return y;
  };

  // Every entry contributes n_reg rows with the same feature, so regressing on the
  // per-entry mean target has the same minimizer.
  RegressionSet data(mdp.dim);
  for (std::size_t i = 0; i < core.size(); ++i) {
    const auto [x, a] = core[i];
    Rng er = rng.split(static_cast<std::uint64_t>(i));
    const double r1 = env.reward(k, x, a), r2 = env.reward(k, x, mdp.anchor);
    double sum = 0.0;
    for (int n = 0; n < p.n_reg; ++n) {
      const double y1 = rollout(x, a, er);
      const double y2 = rollout(x, mdp.anchor, er);
      sum += y1 - y2;
    }
    data.add(mdp.anchored_feature(k, x, a), r1 - r2 + sum / p.n_reg);
  }
  return projected_least_squares(data, 0.0, BallConstraint{p.b_radius});
}

StateAction uncertain_state_action(int h, const std::vector<std::vector<StateAction>>& core_sets,
                                   const std::vector<LayerSnapshot>& policy, const DesignMatrix& design,
                                   const MtssParams& p, MdpEnv& env, Rng& rng) {
  const TokenMdp& mdp = env.mdp();
  const int k = h - 1, A = mdp.num_actions;
  if (h < 1 || h > mdp.horizon) throw ValidationError("mtss: layer out of range");
  const std::vector<RowMat> f = value_tables(mdp, policy, 1, h, p.nu);
  const RejectionConfig cfg = p.rejection(mdp.beta);

  RowMat norm(mdp.num_states[k], A);
  for (int x = 0; x < norm.rows(); ++x)
    for (int a = 0; a < A; ++a) norm(x, a) = design.mahalanobis(mdp.anchored_feature(k, x, a));

  double kappa = 0.0;
  std::optional<StateAction> best, first;
  auto consider = [&](int x, int a) {
    if (!first) first = StateAction{x, a};
    if (norm(x, a) > kappa) kappa = norm(x, a), best = StateAction{x, a};
  };

  for (int l = 0; l < h; ++l) {
    const auto& core = core_sets[l];
    for (std::size_t i = 0; i < core.size(); ++i) {
      Rng er = rng.split(static_cast<std::uint64_t>(l)).split(static_cast<std::uint64_t>(i));
      for (int n = 0; n < p.n_span; ++n) {
        int x, m;
        if (l == 0) {
          x = env.start(), m = 0;
        } else {
          env.reset(l - 1, core[i].x);
          x = env.step(l - 1, core[i].x, core[i].a), m = l;
        }
        int a;
        for (;;) {
          a = sample_row(f[m].data() + x * A, m, x, env, cfg, er).first;
          if (m == k) break;
          x = env.step(m, x, a);
          ++m;
        }
        consider(x, a);
        for (int b = 0; b < p.n_span_bar; ++b) consider(x, env.sample_action(k, x, er));
      }
    }
  }
  if (best) return *best;
  if (first) return *first;
  throw ValidationError("mtss: empty seed core set");
}

MtssResult mtss(MdpEnv& env, const MtssParams& p, Rng rng, bool exact_metrics) {
  p.validate();
  const TokenMdp& mdp = env.mdp();
  const int H = mdp.horizon, d = mdp.dim;
  const bool known = mdp.realizable && static_cast<int>(mdp.theta_star.size()) == H;

  MtssResult res;
  MtssState& st = res.state;
  st.anchor = mdp.anchor;
  st.core_sets.assign(H + 1, {});
  st.core_sets[0].push_back({0, mdp.anchor});
  st.designs.resize(H + 1);
  st.thetas.assign(H + 1, Vec::Zero(d));
  for (int h = 1; h <= H; ++h) st.designs[h] = std::make_shared<DesignMatrix>(d, p.lambda);

  const RejectionConfig cfg = p.rejection(mdp.beta);
  Rng fit_rng = rng.split("fit"), usa_rng = rng.split("uncertain");
  MtssPolicy last;

  for (int t = 1; t <= p.t_iters; ++t) {
    Rng ft = fit_rng.split(static_cast<std::uint64_t>(t)), ut = usa_rng.split(static_cast<std::uint64_t>(t));
    std::vector<LayerSnapshot> snaps(H);
    for (int h = 1; h <= H; ++h) snaps[h - 1].design = std::make_shared<const DesignMatrix>(*st.designs[h]);
    for (int h = H; h >= 1; --h) {
      Rng hr = ft.split(static_cast<std::uint64_t>(h));
      st.thetas[h] = fit_value(h, st.core_sets[h], snaps, p, env, hr);
      snaps[h - 1].theta = st.thetas[h];
    }

    std::vector<StateAction> picked(H + 1);
    MtssIteration it;
    it.round = t;
    for (int h = 1; h <= H; ++h) {
      Rng hr = ut.split(static_cast<std::uint64_t>(h));
      picked[h] = uncertain_state_action(h, st.core_sets, snaps, *snaps[h - 1].design, p, env, hr);
      const Vec phi = mdp.anchored_feature(h - 1, picked[h].x, picked[h].a);
      it.trigger = std::max(it.trigger, snaps[h - 1].design->mahalanobis_sq(phi));
    }
    for (int h = 1; h <= H; ++h) {
      st.core_sets[h].push_back(picked[h]);
      st.core_sets[h].push_back({picked[h].x, mdp.anchor});
      st.designs[h]->rank_one_update(mdp.anchored_feature(h - 1, picked[h].x, picked[h].a));
    }

    last = MtssPolicy{snaps, p.nu, mdp.anchor, cfg};
    it.certified = it.trigger <= p.nu * p.nu / 4.0;
    if (it.certified) {
      st.best_round = t;
      res.policy = last;
      res.certified = true;
      res.round = t;
    }
    it.ledger = env.ledger();
    for (int h = 1; h <= H; ++h) {
      it.core_sizes.push_back(st.core_sets[h].size());
      if (known) {
        const Vec e = snaps[h - 1].theta - mdp.theta_star[h - 1];
        it.estimation_error.push_back(std::sqrt(std::max(0.0, e.dot(snaps[h - 1].design->sigma() * e))));
      }
    }
    if (exact_metrics) it.exact_regret = mtss_exact_regret(mdp, last);
    res.iterations.push_back(std::move(it));
  }

  if (!res.certified) {
    res.policy = last;
    res.round = p.t_iters;
  }
  res.ledger = env.ledger();
  if (exact_metrics) res.exact_regret = mtss_exact_regret(mdp, res.policy);
  return res;
}

MdpPolicy mtss_policy_law(const TokenMdp& mdp, const MtssPolicy& pi) {
  if (static_cast<int>(pi.layers.size()) != mdp.horizon) throw ValidationError("mtss: policy horizon mismatch");
  MdpPolicy law(mdp.horizon);
  const std::uint64_t n = pi.sampler.n_budget();
  for (int k = 0; k < mdp.horizon; ++k) {
    const RowMat f = truncated_value_table(mdp, k, pi.layers[k], pi.nu);
    law[k].resize(f.rows(), f.cols());
    for (int x = 0; x < f.rows(); ++x)
      law[k].row(x) = rejection_law(mdp.pi_ref[k].row(x).transpose(), f.row(x).transpose(), mdp.beta,
                                    pi.sampler.m_threshold, n)
                          .transpose();
  }
  return law;
}

double mtss_exact_regret(const TokenMdp& mdp, const MtssPolicy& pi) {
  const double opt = initial_value(mdp, exact_qstar(mdp));
  return opt - finite_or_throw(mdp_jbeta(mdp, mtss_policy_law(mdp, pi)));
}

double exact_c_cond(const TokenMdp& mdp) {
  const MdpPolicy star = softmax_policy(mdp, exact_qstar(mdp));
  double c = 1.0;
  for (int k = 0; k < mdp.horizon; ++k)
    for (Eigen::Index x = 0; x < star[k].rows(); ++x)
      for (Eigen::Index a = 0; a < star[k].cols(); ++a) {
        const double r = mdp.pi_ref[k](x, a);
        if (r > 0.0) c = std::max(c, star[k](x, a) / r);
      }
  return c;
}

std::uint64_t predicted_resets(const MtssParams& p, int H) {
  // Iteration t sees |C_h| = 2 (t - 1) at every layer h >= 1.
  const std::uint64_t T = p.t_iters, h = H;
  const std::uint64_t pairs = T * (T - 1);  // sum_t 2 (t - 1)
  return pairs * (2 * h * p.n_reg + h * (h - 1) / 2 * p.n_span);
}

}  // namespace klx
