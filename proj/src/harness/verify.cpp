#include "klx/harness/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <thread>

#include "klx/dnf.hpp"
#include "klx/errors.hpp"
#include "klx/exact.hpp"
#include "klx/generators.hpp"
#include "klx/harness/runner.hpp"
#include "klx/linalg.hpp"
#include "klx/oracle.hpp"
#include "klx/rejection.hpp"
#include "klx/spanner.hpp"

namespace klx::harness {

namespace {

struct Outcome {
  bool passed;
  std::string measured;
  std::string tolerance;
};

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  std::function<Outcome()> body;
};

int worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

Vec random_distribution(int n, Rng& rng) {
  Vec p(n);
  for (int i = 0; i < n; ++i) p[i] = 0.05 + rng.uniform();
  return p / p.sum();
}

double c_inf(const VecRef& pi_ref, const VecRef& f, double beta) {
  const SoftmaxRow s = softmax_row(pi_ref, f, beta);
  double c = 0.0;
  for (Eigen::Index y = 0; y < pi_ref.size(); ++y)
    if (pi_ref[y] > 0.0) c = std::max(c, s.probs[y] / pi_ref[y]);
  return c;
}

// ---- 1, 2: rejection sampler ----

Outcome rejection_exactness() {
  const AlignmentInstance inst = gen_random_instance(3, 1, 10, 0.5, 1.0, 11);
  const Vec f = inst.reward_mean.row(0).transpose();
  const SoftmaxRow target = softmax_row(inst.pi_ref.row(0).transpose(), f, inst.beta);
  const double c = c_inf(inst.pi_ref.row(0).transpose(), f, inst.beta);
  const RejectionConfig cfg = RejectionConfig::make(inst.beta, 4.0 * c, 0.05);

  QueryLedger ledger;
  AlignmentOracle oracle(inst, ledger, Rng(1, "oracle"), OracleMode::Weak);
  PromptProposal src(oracle, 0);
  Rng rng(1, "sampler");
  auto fn = [&](int y) { return f[y]; };

  std::vector<double> hist(inst.num_responses, 0.0);
  long accepted = 0, trials = 0, failures_first = 0;
  constexpr long kAccepted = 100000, kTrials = 10000;
  while (accepted < kAccepted || trials < kTrials) {
    const RejectionOutcome o = softmax_sampler(fn, src, cfg, rng);
    if (trials < kTrials && !o.accepted) ++failures_first;
    ++trials;
    if (o.accepted && accepted < kAccepted) hist[o.response] += 1.0, ++accepted;
  }
  double tv = 0.0;
  for (int y = 0; y < inst.num_responses; ++y) tv += std::abs(hist[y] / kAccepted - target.probs[y]);
  tv *= 0.5;
  const double fail_rate = static_cast<double>(failures_first) / kTrials;
  return {tv <= 0.02 && fail_rate <= cfg.delta,
          fmt::format("TV={:.4g} failure_rate={:.4g} (C_inf={:.3g}, M={:.3g})", tv, fail_rate, c, cfg.m_threshold),
          fmt::format("TV<=0.02 over 1e5 accepts, failure<={}", cfg.delta)};
}

Outcome density_estimate() {
  const AlignmentInstance inst = gen_random_instance(3, 1, 10, 0.5, 1.0, 12);
  const Vec pi_ref = inst.pi_ref.row(0).transpose();
  const Vec f = inst.reward_mean.row(0).transpose();
  const SoftmaxRow target = softmax_row(pi_ref, f, inst.beta);
  const double c = c_inf(pi_ref, f, inst.beta);
  const RejectionConfig cfg = RejectionConfig::make(inst.beta, 4.0 * c * c, 0.05);
  const double bound = c * std::sqrt(2.0 / cfg.m_threshold);
  const double lo = -2.0 * inst.r_max / inst.beta, hi = 2.0 * inst.r_max / inst.beta;

  QueryLedger ledger;
  AlignmentOracle oracle(inst, ledger, Rng(2, "oracle"), OracleMode::Weak);
  PromptProposal src(oracle, 0);
  Rng rng(2, "sampler");
  auto fn = [&](int y) { return f[y]; };
  constexpr int kTrials = 10000;
  int within = 0, outside_range = 0;
  double worst = 0.0;
  for (int i = 0; i < kTrials; ++i) {
    const RejectionOutcome o = softmax_sampler_density(fn, src, cfg, rng);
    const double truth = f[o.response] / inst.beta - target.log_z;
    const double err = std::abs(o.log_density - truth);
    worst = std::max(worst, err);
    if (err <= bound) ++within;
    if (o.log_density < lo || o.log_density > hi) ++outside_range;
  }
  const double frac = static_cast<double>(within) / kTrials;
  return {frac >= 0.95 && outside_range == 0,
          fmt::format("within={:.4f} max_err={:.3g} out_of_range={}", frac, worst, outside_range),
          fmt::format("|err|<={:.4g} in >=95%, log rho in [{:.3g},{:.3g}]", bound, lo, hi)};
}

// ---- 3: exact identities ----

Outcome exact_identities() {
  constexpr double tol = 1e-9;
  double worst_a = 0.0, worst_b = 0.0, worst_c = 0.0, worst_d = 0.0;
  Rng rng(3, "identities");
  for (int i = 0; i < 100; ++i) {
    const int d = 2 + i % 5, X = 1 + i % 4, Y = 3 + i % 17;
    const double beta = 0.1 + 0.1 * (i % 9);
    const AlignmentInstance inst = gen_random_instance(d, X, Y, beta, 1.0, 3000 + i);
    const OptimalSolution opt = exact_optimal(inst);

    for (int x = 0; x < X; ++x)
      for (int y = 0; y < Y; ++y)
        for (int y2 = 0; y2 < Y; ++y2) {
          const double diff = inst.reward_mean(x, y) - inst.reward_mean(x, y2);
          const double lin = inst.theta_star.dot(inst.feature(x, y) - inst.feature(x, y2));
          const double logr = beta * (std::log(opt.policy(x, y) / inst.pi_ref(x, y)) -
                                      std::log(opt.policy(x, y2) / inst.pi_ref(x, y2)));
          worst_a = std::max({worst_a, std::abs(diff - lin), std::abs(diff - logr)});
        }

    RowMat f(X, Y);
    for (int x = 0; x < X; ++x)
      for (int y = 0; y < Y; ++y) f(x, y) = 2.0 * rng.uniform() - 1.0;
    const PolicyTable pf = policy_table(inst, f);
    const double regret = finite_or_throw(exact_jbeta(inst, opt.policy)) - finite_or_throw(exact_jbeta(inst, pf));
    const double kl = beta * finite_or_throw(kl_divergence(inst, pf, opt.policy));
    KahanSum closed;
    for (int x = 0; x < X; ++x) {
      const SoftmaxRow sf = exact_softmax(inst, f, x);
      double e = 0.0;
      for (int y = 0; y < Y; ++y) e += pf(x, y) * (f(x, y) - inst.reward_mean(x, y));
      closed.add(inst.prompt_dist[x] * (beta * (opt.log_z[x] - sf.log_z) + e));
    }
    worst_b = std::max({worst_b, std::abs(regret - kl), std::abs(regret - closed.value())});

    const TokenMdp mdp = gen_token_mdp(3, 2 + i % 4, 2 + i % 3, 0.3 + 0.1 * (i % 5), 1.0, 4000 + i, i % 2 == 0);
    auto random_policy = [&] {
      MdpPolicy pi(mdp.horizon);
      for (int h = 0; h < mdp.horizon; ++h) {
        pi[h].resize(mdp.num_states[h], mdp.num_actions);
        for (int x = 0; x < mdp.num_states[h]; ++x) pi[h].row(x) = random_distribution(mdp.num_actions, rng).transpose();
      }
      return pi;
    };
    const MdpPolicy p1 = random_policy(), p2 = random_policy();
    worst_c = std::max(worst_c, std::abs(performance_difference_check(mdp, p1, p2).residual));

    const QTables q = exact_qstar(mdp);
    const double by_occupancy = finite_or_throw(mdp_jbeta(mdp, softmax_policy(mdp, q)));
    worst_d = std::max({worst_d, soft_bellman_residual(mdp, q), std::abs(by_occupancy - initial_value(mdp, q))});
  }
  const bool ok = worst_a <= tol && worst_b <= tol && worst_c <= tol && worst_d <= tol;
  return {ok,
          fmt::format("reward_diff={:.2e} kl_regret={:.2e} perf_diff={:.2e} soft_bellman={:.2e}", worst_a, worst_b,
                      worst_c, worst_d),
          "each <= 1e-9 over 100 instances"};
}

// ---- 4: spanner size ----

Outcome spanner_size() {
  const int dims[] = {3, 5, 8};
  int violations = 0;
  double worst = 0.0;
  std::size_t largest = 0;
  for (int i = 0; i < 50; ++i) {
    const int d = dims[i % 3];
    const AlignmentInstance inst = gen_random_instance(d, 4, 50, 0.2, 1.0, 5000 + i);
    const double c_cov = coverage_coefficients(inst, exact_optimal(inst).policy).c_cov;
    const SpannerParams p = SpannerParams::derive(d, 1.0, 1.0, 0.2, 500, 50, 1000, 0.05, c_cov, 0.1);
    QueryLedger ledger;
    AlignmentOracle oracle(inst, ledger, Rng(i, "oracle"), OracleMode::Weak);
    Rng rng(i, "spanner");
    const SpannerState st = run_spanner_phase(oracle, p, rng);
    const std::size_t k = st.core_set.size();
    const double bound = spanner_size_bound(k, d, p.lambda, p.nu);
    if (static_cast<double>(k) > bound) ++violations;
    worst = std::max(worst, static_cast<double>(k) / bound);
    largest = std::max(largest, k);
  }
  return {violations == 0, fmt::format("violations={} max k/bound={:.3g} max k={}", violations, worst, largest),
          "k <= 2d log(1+4k/(d lambda))/nu^2 on 50/50"};
}

// ---- 5: elliptic potential ----

Outcome elliptic_potential() {
  Rng rng(5, "elliptic");
  std::normal_distribution<double> n01;
  int violations = 0;
  double worst = 0.0;
  const double lambdas[] = {0.05, 0.5, 1.0, 4.0};
  for (int s = 0; s < 100; ++s) {
    const int d = 1 + s % 10;
    const int T = 50 + static_cast<int>(rng.below(1951));
    const double lambda = lambdas[s % 4];
    DesignMatrix V(d, lambda);
    double lhs = 0.0, mid = 0.0, sq = 0.0;
    for (int t = 0; t < T; ++t) {
      Vec v(d);
      for (int j = 0; j < d; ++j) v[j] = n01(rng);
      v /= v.norm();
      if (s % 3 != 0) v *= rng.uniform();  // every third sequence stays on the sphere
      const double q = V.mahalanobis_sq(v);
      lhs += std::min(1.0, q);
      mid += 2.0 * std::log1p(q);
      sq += std::min(1.0, std::sqrt(q));
      V.rank_one_update(v);
    }
    const double rhs = 2.0 * d * std::log1p(T / (d * lambda));
    const double rhs_sqrt = std::sqrt(2.0 * d * T * std::log1p(T / (d * lambda)));
    const double slack = 1e-9 * (1.0 + rhs);
    if (lhs > mid + slack || mid > rhs + slack || sq > rhs_sqrt + slack) ++violations;
    worst = std::max({worst, lhs / rhs, mid / rhs, sq / rhs_sqrt});
  }
  return {violations == 0, fmt::format("violations={} max ratio={:.3g}", violations, worst),
          "sum min(1,q) <= 2 sum log(1+q) <= 2d log(1+T/(d lambda)), sqrt form, 100/100"};
}

// ---- 6, 7, 8, 10: end to end runs through the harness ----

ExperimentConfig experiment(const Json& doc) { return parse_experiment(doc); }

Json random_instance_doc() {
  return {{"generator", "random"}, {"d", 5}, {"prompts", 4}, {"responses", 50}, {"beta", 0.2}, {"r_max", 1.0},
          {"B", 1.0}, {"noise", "bernoulli"}};
}

std::vector<std::uint64_t> seed_range(std::uint64_t first, std::uint64_t count) {
  std::vector<std::uint64_t> s(count);
  for (std::uint64_t i = 0; i < count; ++i) s[i] = first + i;
  return s;
}

std::string failures(const std::vector<SeedRun>& runs) {
  for (const SeedRun& r : runs)
    if (r.summary.status != "ok") return fmt::format(" first_error=seed {}: {}", r.summary.seed, r.summary.error);
  return "";
}

Outcome spanner_end_to_end() {
  const ExperimentConfig cfg = experiment({{"instance", random_instance_doc()},
                                          {"learner", {{"name", "spanner"}, {"t_exp", 2000}}},
                                          {"seeds", seed_range(0, 10)}});
  const auto runs = run_seeds(cfg, worker_count());
  int good = 0, ledger_ok = 0;
  double worst = 0.0;
  for (const SeedRun& r : runs) {
    if (r.summary.status != "ok" || !r.summary.final_regret) continue;
    const double reg = *r.summary.final_regret;
    worst = std::max(worst, reg);
    if (reg <= 0.1) ++good;
    if (r.summary.ledger.t_data == 2 * (*r.summary.core_size + 2000)) ++ledger_ok;
  }
  return {good >= 8 && ledger_ok == 10,
          fmt::format("regret<=0.1 in {}/10 (max {:.4f}), t_data identity {}/10{}", good, worst, ledger_ok,
                      failures(runs)),
          ">=8/10 with regret<=0.1, t_data = 2(|Psi|+T_exp) on 10/10"};
}

Outcome fast_rate_trend() {
  const int grid[] = {500, 1000, 2000, 4000};
  std::vector<double> medians;
  std::string failed;
  for (int t : grid) {
    const ExperimentConfig cfg = experiment({{"instance", random_instance_doc()},
                                            {"learner", {{"name", "spanner"}, {"t_exp", t}}},
                                            {"seeds", seed_range(100, 20)}});
    const auto runs = run_seeds(cfg, worker_count());
    if (failed.empty()) failed = failures(runs);
    std::vector<double> reg;
    for (const SeedRun& r : runs)
      if (r.summary.final_regret) reg.push_back(*r.summary.final_regret);
    medians.push_back(reg.empty() ? std::nan("") : quantile(reg, 0.5));
  }
  // least-squares slope of log2(median) against log2(T_exp)
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < medians.size(); ++i) {
    const double x = std::log2(grid[i]), y = std::log2(medians[i]);
    sx += x, sy += y, sxx += x * x, sxy += x * y;
  }
  const double n = static_cast<double>(medians.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double per_doubling = std::exp2(-slope);
  const double top = *std::max_element(medians.begin(), medians.end());
  const bool ok = per_doubling >= 1.5 && top <= 0.2 && failed.empty();
  return {ok,
          fmt::format("medians=[{:.4g}, {:.4g}, {:.4g}, {:.4g}] factor/doubling={:.3g} overall={:.3g}{}", medians[0],
                      medians[1], medians[2], medians[3], per_doubling, medians[0] / medians[3], failed),
          "fitted factor per doubling >= 1.5, medians <= beta = 0.2"};
}

Outcome coverage_separation() {
  const Json inst = {{"generator", "coverage_hard"}, {"c_star", 200.0}, {"responses", 64}, {"beta", 0.1}};
  const auto seeds = seed_range(0, 25);
  const ExperimentConfig dpo = experiment({{"instance", inst},
                                          {"learner", {{"name", "online_dpo"}, {"rounds", 20}}},
                                          {"seeds", seeds}});
  const ExperimentConfig span = experiment(
      {{"instance", inst},
       {"learner", {{"name", "spanner"}, {"t_exp", 20}, {"t_prompt", 4}, {"n_span", 800}, {"reward_budget", 40}}},
       {"seeds", seeds}});
  const auto dpo_runs = run_seeds(dpo, worker_count());
  const auto span_runs = run_seeds(span, worker_count());
  auto successes = [](const std::vector<SeedRun>& runs) {
    int n = 0;
    for (const SeedRun& r : runs)
      if (r.summary.final_regret && *r.summary.final_regret <= 0.25) ++n;
    return n;
  };
  int budget_ok = 0, dpo_budget_ok = 0;
  for (const SeedRun& r : span_runs) budget_ok += r.summary.ledger.t_data == 40;
  for (const SeedRun& r : dpo_runs) dpo_budget_ok += r.summary.ledger.t_data == 40;
  const int a = successes(dpo_runs), b = successes(span_runs);
  return {a <= 5 && b >= 20 && budget_ok == 25 && dpo_budget_ok == 25,
          fmt::format("OnlineDPO {}/25, SpannerSampling {}/25, t_data=40 on {}/25 and {}/25{}{}", a, b,
                      dpo_budget_ok, budget_ok, failures(dpo_runs), failures(span_runs)),
          "OnlineDPO <= 5/25 and SpannerSampling >= 20/25 with regret <= 1/4"};
}

Outcome mtss_end_to_end() {
  const Json inst = {{"generator", "token_mdp"}, {"H", 3}, {"A", 4}, {"d", 3}, {"beta", 0.5}, {"B", 1.0}};
  const ExperimentConfig cfg = experiment(
      {{"instance", inst},
       {"learner", {{"name", "mtss"}, {"n_reg", 450}, {"n_span", 100}, {"n_span_bar", 100}}},
       {"seeds", seed_range(0, 10)}});
  double residual = 0.0;
  for (std::uint64_t s : cfg.seeds) {
    const TokenMdp mdp = std::get<TokenMdp>(build_instance(cfg.instance, s));
    residual = std::max(residual, value_difference_residual(mdp, exact_qstar(mdp)));
  }
  const auto runs = run_seeds(cfg, worker_count());
  int good = 0, certified = 0;
  double worst = 0.0;
  for (const SeedRun& r : runs) {
    if (r.summary.status != "ok" || !r.summary.final_regret) continue;
    const bool cert = r.summary.certified.value_or(false);
    certified += cert;
    worst = std::max(worst, *r.summary.final_regret);
    if (cert && *r.summary.final_regret <= 0.15) ++good;
  }
  return {residual <= 1e-9 && good >= 7,
          fmt::format("value_diff_residual={:.2e}, certified {}/10, certified with regret<=0.15 {}/10 (max {:.4f}){}",
                      residual, certified, good, worst, failures(runs)),
          "residual <= 1e-9 and >=7/10 certified with regret <= 0.15"};
}

// ---- 9: truncated density ----

Outcome truncated_density() {
  Rng rng(9, "truncated");
  std::normal_distribution<double> n01;
  long qualifying = 0, violations = 0;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const int d = 2 + i % 4;
    const double beta = (i % 3 == 0) ? 0.1 : (i % 3 == 1 ? 0.2 : 0.5);
    const AlignmentInstance inst = gen_random_instance(d, 3, 20, beta, 1.0, 9000 + i);
    const PolicyTable pstar = policy_table(inst, linear_reward_table(inst, inst.theta_star));
    const double c_cov = coverage_coefficients(inst, pstar).c_cov;

    DesignMatrix design(d, 1.0);
    const int pairs = 2 + static_cast<int>(rng.below(40));
    for (int j = 0; j < pairs; ++j) {
      const int x = static_cast<int>(rng.below(inst.num_prompts));
      const int y = static_cast<int>(rng.below(inst.num_responses)), y2 = static_cast<int>(rng.below(inst.num_responses));
      design.rank_one_update(inst.feature(x, y) - inst.feature(x, y2));
    }
    Vec dir(d);
    for (int j = 0; j < d; ++j) dir[j] = n01(rng);
    const double eps_target = 0.05 + 0.95 * rng.uniform();
    const Vec theta = inst.theta_star + dir * (eps_target / std::sqrt(dir.dot(design.sigma() * dir)));
    const double eps_stat = std::sqrt((theta - inst.theta_star).dot(design.sigma() * (theta - inst.theta_star)));
    const double nu = beta / eps_stat * (0.25 + 0.75 * rng.uniform());

    const SnapshotEvaluator eval(inst, design, nu, RejectionConfig::make(beta, 1.0, 0.1));
    for (int x = 0; x < inst.num_prompts; ++x)
      for (int y2 = 0; y2 < inst.num_responses; ++y2) {
        double eps_span = 0.0;
        for (int y = 0; y < inst.num_responses; ++y)
          if (!eval.inside(x, y, y2)) eps_span += pstar(x, y);
        if (eps_span > 0.5) continue;
        ++qualifying;
        const Vec law = eval.truncated_softmax(theta, x, y2);
        double ratio = 0.0;
        for (int y = 0; y < inst.num_responses; ++y) ratio = std::max(ratio, law[y] / inst.pi_ref(x, y));
        const double bound = 2.0 * std::exp(2.0) * c_cov;
        if (ratio > bound) ++violations;
        worst = std::max(worst, ratio / bound);
      }
  }
  return {violations == 0 && qualifying > 0,
          fmt::format("qualifying (x,y')={} violations={} max ratio/bound={:.3g}", qualifying, violations, worst),
          "pi_bar/pi_ref <= 2 e^2 C_cov(pi_theta*) at every qualifying pair"};
}

// ---- 11: autoregressive gap ----

Outcome autoregressive_gap() {
  const TokenMdp m = gen_autoregressive_gap_instance(0.1);
  // sequence-level enumeration: layer-1 state equals the first token
  double num = 0.0, den = 0.0;
  for (int a0 = 0; a0 < 2; ++a0)
    for (int a1 = 0; a1 < 2; ++a1) {
      const double w = m.pi_ref[0](0, a0) * m.pi_ref[1](a0, a1) *
                       std::exp((m.reward_mean[0](0, a0) + m.reward_mean[1](a0, a1)) / m.beta);
      den += w;
      if (a0 == 1 && a1 == 0) num = w;
    }
  const double enumerated = num / den;
  const MdpPolicy star = softmax_policy(m, exact_qstar(m));
  const double recursive = star[0](0, 1) * star[1](1, 0);
  const double target = 1.0 / 1.1;
  const double opt_err = std::max(std::abs(enumerated - target), std::abs(recursive - target));

  // autoregressive linear softmax over a 10^4 grid of (theta_1, theta_2)
  const double B = m.param_radius;
  std::vector<double> axis(10);
  for (int i = 0; i < 10; ++i) axis[i] = -3.0 * B + 6.0 * B * i / 9.0;
  double best = 0.0, layer1_dev = 0.0;
  auto tilt = [&](int h, int x, const Vec& th) {
    Vec w(2);
    for (int a = 0; a < 2; ++a) w[a] = m.pi_ref[h](x, a) * std::exp(th.dot(m.feature(h, x, a)) / m.beta);
    return Vec(w / w.sum());
  };
  for (double t0 : axis)
    for (double t1 : axis) {
      const Vec th1 = (Vec(2) << t0, t1).finished();
      const double p1 = tilt(0, 0, th1)[1];
      layer1_dev = std::max(layer1_dev, std::abs(p1 - 0.5));
      for (double t2 : axis)
        for (double t3 : axis) best = std::max(best, p1 * tilt(1, 1, (Vec(2) << t2, t3).finished())[0]);
    }
  return {opt_err <= 1e-12 && best <= 0.5 + 1e-12 && layer1_dev <= 1e-12,
          fmt::format("optimal mass={:.15f} (err {:.1e}), best autoregressive={:.15f}, |pi(y1)-1/2|={:.1e}", enumerated,
                      opt_err, best, layer1_dev),
          "optimal = 1/1.1 within 1e-12; autoregressive <= 1/2 + 1e-12"};
}

// ---- 12: DNF toolkit ----

Outcome dnf_toolkit() {
  Rng rng(12, "dnf");
  int identity_fail = 0, norm_fail = 0, reward_fail = 0;
  long full_width_checked = 0;
  for (int i = 0; i < 50; ++i) {
    const int n = 2 + static_cast<int>(rng.below(9));
    const int k = 1 + static_cast<int>(rng.below(std::min(n, 4)));
    const int m = 1 + static_cast<int>(rng.below(8));
    const int t = 1 + i % 2;
    const DnfFormula phi = random_dnf(n, m, k, rng);
    const DnfFormula rep = serial_repetition(phi, t);
    const int base = dnf_opt(phi).value;
    if (dnf_opt(rep).value != static_cast<int>(std::lround(std::pow(base, t)))) ++identity_fail;

    for (const DnfFormula* f : {&phi, &rep}) {
      const AlignmentInstance inst = gen_dnf_instance(*f, 1.0);
      for (Eigen::Index r = 0; r < inst.features.rows(); ++r)
        if (inst.features.row(r).norm() > 1.0 + 1e-12) ++norm_fail;
      const Assignment& a = dnf_opt(*f).assignment;
      for (int c = 0; c < f->m(); ++c) {
        const Clause& cl = f->clauses[c];
        if (cl.contradictory) continue;
        bool sat = true;
        for (std::size_t l = 0; l < cl.vars.size(); ++l) sat &= a[cl.vars[l]] == cl.signs[l];
        if (!sat) continue;
        // a satisfied clause earns width / k, which is 1 exactly at full width
        const double r = inst.reward_mean(0, c + 1);
        const double expect = static_cast<double>(cl.vars.size()) / f->k;
        if (std::abs(r - expect) > 1e-12) ++reward_fail;
        if (static_cast<int>(cl.vars.size()) == f->k) {
          ++full_width_checked;
          if (std::abs(r - 1.0) > 1e-12) ++reward_fail;
        }
      }
    }
  }
  return {identity_fail == 0 && norm_fail == 0 && reward_fail == 0 && full_width_checked > 0,
          fmt::format("identity failures={} norm failures={} reward failures={} (full-width satisfied clauses={})",
                      identity_fail, norm_fail, reward_fail, full_width_checked),
          "opt(phi^t) = opt(phi)^t on 50/50, |phi| <= 1, satisfied k-clause reward = 1"};
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> c = {
      {1, "rejection exactness", 30, rejection_exactness},
      {2, "density estimate", 30, density_estimate},
      {3, "exact identities", 60, exact_identities},
      {4, "spanner size", 600, spanner_size},
      {5, "elliptic potential", 600, elliptic_potential},
      {6, "spanner sampling end to end", 600, spanner_end_to_end},
      {7, "fast-rate trend", 1800, fast_rate_trend},
      {8, "coverage separation", 600, coverage_separation},
      {9, "truncated density bound", 600, truncated_density},
      {10, "multi-turn spanner sampling", 900, mtss_end_to_end},
      {11, "autoregressive gap", 600, autoregressive_gap},
      {12, "DNF toolkit", 600, dnf_toolkit},
  };
  return c;
}

}  // namespace

const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> s = {"all",        "rejection", "identities", "core-linalg", "exact-oracle",
                                             "instances",  "spanner",   "baselines",  "multiturn"};
  return s;
}

std::vector<int> suite_criteria(const std::string& suite) {
  static const std::map<std::string, std::vector<int>> m = {
      {"all", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}},
      {"rejection", {1, 2}},
      {"identities", {3}},
      {"exact-oracle", {3}},
      {"core-linalg", {5}},
      {"spanner", {4, 6, 7, 9}},
      {"baselines", {8}},
      {"multiturn", {10}},
      {"instances", {11, 12}},
  };
  const auto it = m.find(suite);
  if (it == m.end()) throw ValidationError(fmt::format("unknown verify suite '{}'", suite));
  return it->second;
}

CheckResult run_criterion(int id) {
  const auto& all = criteria();
  const auto it = std::find_if(all.begin(), all.end(), [id](const Criterion& c) { return c.id == id; });
  if (it == all.end()) throw ValidationError(fmt::format("no criterion {}", id));
  CheckResult r;
  r.id = id;
  r.name = it->name;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const Outcome o = it->body();
    r.passed = o.passed;
    r.measured = o.measured;
    r.tolerance = o.tolerance;
  } catch (const std::exception& e) {
    r.passed = false;
    r.measured = fmt::format("error: {}", e.what());
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.seconds > it->limit_seconds) r.passed = false;
  r.tolerance += fmt::format(", runtime <= {:.0f}s", it->limit_seconds);
  return r;
}

std::string format_check(const CheckResult& r) {
  return fmt::format("[{}] C{:02d} {}  measured: {}  tolerance: {}  ({:.1f}s)", r.passed ? "PASS" : "FAIL", r.id,
                     r.name, r.measured, r.tolerance, r.seconds);
}

std::vector<CheckResult> verify(const std::string& suite, std::ostream* live) {
  std::vector<CheckResult> out;
  for (int id : suite_criteria(suite)) {
    out.push_back(run_criterion(id));
    if (live) *live << format_check(out.back()) << std::endl;
  }
  return out;
}

}  // namespace klx::harness
