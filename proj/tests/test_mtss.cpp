#include <gtest/gtest.h>

#include "klx/exact.hpp"
#include "klx/generators.hpp"
#include "klx/mtss.hpp"
#include "support.hpp"

namespace klx {
namespace {

// H = 1, one state, A = 2, d = 1: action 0 is the anchor at -1, action 1 sits at +1.
TokenMdp line_mdp() {
  TokenMdp m;
  m.horizon = 1;
  m.num_actions = 2;
  m.dim = 1;
  m.num_states = {1};
  m.initial = Vec::Ones(1);
  m.features = {(RowMat(2, 1) << -1.0, 1.0).finished()};
  m.pi_ref = {RowMat::Constant(1, 2, 0.5)};
  m.theta_star = {Vec::Constant(1, 0.25)};
  m.reward_mean = {(RowMat(1, 2) << 0.0, 0.5).finished()};
  m.beta = 0.5;
  m.r_max = 0.5;
  m.param_radius = 1.0;
  m.realizable = true;
  m.validate();
  return m;
}

MtssParams small_params(int t_iters) {
  MtssParams p;
  p.t_iters = t_iters;
  p.n_reg = 3;
  p.n_span = 4;
  p.n_span_bar = 30;
  p.m_rej = 8.0;
  p.delta_rej = 0.1;
  p.nu = 0.5;
  p.lambda = 1.0;
  p.eps_reg = 0.3;
  p.b_radius = 1.0;
  return p;
}

TEST(MtssParams, DeskPreset) {
  const MtssParams p = MtssParams::desk(3, 3, 1.0, 0.15, 1.0, 2.0);
  EXPECT_EQ(p.t_iters, 108);
  EXPECT_EQ(p.n_reg, 2000);
  EXPECT_EQ(p.n_span, 200);
  EXPECT_DOUBLE_EQ(p.nu, 0.5);
  EXPECT_DOUBLE_EQ(p.eps_reg, std::sqrt(0.15));
  EXPECT_DOUBLE_EQ(p.lambda, 0.15);
  EXPECT_DOUBLE_EQ(p.m_rej, 8.0);
  EXPECT_DOUBLE_EQ(p.delta_rej, 0.15 / (9.0 * 108.0));
}

TEST(TruncatedSample, ZeroThetaIsReference) {
  const TokenMdp m = gen_token_mdp(2, 4, 3, 0.5, 1.0, 1, true);
  QueryLedger ledger;
  MdpEnv env(m, ledger, Rng(1));
  const int x = env.start();
  const LayerSnapshot s{Vec::Zero(3), std::make_shared<const DesignMatrix>(3, 1.0)};
  Rng rng(2);
  Vec freq = Vec::Zero(4);
  for (int i = 0; i < 40000; ++i) {
    const auto [a, log_rho] = truncated_action_sample(s, 0.5, 1, x, env, RejectionConfig::make(0.5, 4.0, 0.1), rng);
    EXPECT_NEAR(log_rho, 0.0, 1e-14);
    freq[a] += 1.0 / 40000;
  }
  EXPECT_LE(test::tv(freq, m.pi_ref[0].row(x).transpose()), 0.015);
}

TEST(TruncatedSample, FullTruncationIsZeroTable) {
  const TokenMdp m = gen_token_mdp(2, 4, 3, 0.5, 1.0, 2, true);
  auto design = std::make_shared<DesignMatrix>(3, 1e6);  // every anchored norm is tiny...
  const LayerSnapshot inside{Vec::Ones(3), design};
  EXPECT_GT(truncated_value_table(m, 0, inside, 0.5).cwiseAbs().maxCoeff(), 0.0);
  const LayerSnapshot s{Vec::Ones(3), std::make_shared<const DesignMatrix>(3, 1e-6)};  // ...or huge
  EXPECT_EQ(truncated_value_table(m, 0, s, 0.5).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TruncatedSample, LawMatchesExactEnumeration) {
  const TokenMdp m = gen_token_mdp(1, 3, 2, 0.5, 1.0, 3, true);
  QueryLedger ledger;
  MdpEnv env(m, ledger, Rng(3));
  const int x = env.start();
  const LayerSnapshot s{m.theta_star[0] * 1.5, std::make_shared<const DesignMatrix>(2, 1.0)};
  const RejectionConfig cfg = RejectionConfig::make(0.5, 20.0, 0.05);
  const RowMat f = truncated_value_table(m, 0, s, 3.0);
  const Vec law = rejection_law(m.pi_ref[0].row(x).transpose(), f.row(x).transpose(), 0.5, 20.0, cfg.n_budget());
  Rng rng(4);
  Vec freq = Vec::Zero(3);
  for (int i = 0; i < 100000; ++i) freq[truncated_action_sample(s, 3.0, 1, x, env, cfg, rng).first] += 1e-5;
  EXPECT_LE(test::tv(freq, law), 0.02);
}

TEST(FitValue, EmptyCoreIsZero) {
  const TokenMdp m = gen_token_mdp(2, 3, 2, 0.5, 1.0, 4, true);
  QueryLedger ledger;
  MdpEnv env(m, ledger, Rng(4));
  Rng rng(5);
  const std::vector<LayerSnapshot> future(2, LayerSnapshot{Vec::Zero(2), std::make_shared<const DesignMatrix>(2, 1.0)});
  EXPECT_EQ(fit_value(2, {}, future, small_params(1), env, rng).norm(), 0.0);
  EXPECT_EQ(ledger, QueryLedger{});
}

TEST(FitValue, LastLayerRecoversThetaOnSpan) {
  const TokenMdp m = gen_token_mdp(2, 4, 3, 0.5, 1.0, 5, true);
  QueryLedger ledger;
  MdpEnv env(m, ledger, Rng(5));
  // visit every last-layer state so resets are legal
  Rng walk(6);
  for (int i = 0; i < 400; ++i) {
    const int x0 = env.start();
    env.step(0, x0, env.sample_action(0, x0, walk));
  }
  std::vector<StateAction> core;
  for (int x = 0; x < m.num_states[1]; ++x)
    if (env.visited(1, x))
      for (int a = 0; a < 4; ++a) core.push_back({x, a});
  ASSERT_GE(core.size(), 4u);
  const std::vector<LayerSnapshot> future(2, LayerSnapshot{Vec::Zero(3), std::make_shared<const DesignMatrix>(3, 1.0)});
  Rng rng(7);
  const Vec theta = fit_value(2, core, future, small_params(1), env, rng);
  EXPECT_LE((theta - m.theta_star[1]).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Uncertain, SeedLayerPicksLargestVisitedNorm) {
  const TokenMdp m = gen_token_mdp(1, 4, 3, 0.5, 1.0, 6, true);
  QueryLedger ledger;
  MdpEnv env(m, ledger, Rng(8));
  MtssParams p = small_params(1);
  p.n_span = 50;
  p.n_span_bar = 200;
  DesignMatrix design(3, 1.0);
  design.rank_one_update((Vec(3) << 1.0, 0.0, 0.0).finished());
  Rng rng(9);
  const std::vector<LayerSnapshot> policy(1, LayerSnapshot{Vec::Zero(3), std::make_shared<const DesignMatrix>(design)});
  const StateAction got = uncertain_state_action(1, {{{0, 0}}}, policy, design, p, env, rng);
  double best = 0.0;
  for (int x = 0; x < m.num_states[0]; ++x)
    if (env.visited(0, x))
      for (int a = 0; a < 4; ++a) best = std::max(best, design.mahalanobis(m.anchored_feature(0, x, a)));
  EXPECT_TRUE(env.visited(0, got.x));
  EXPECT_DOUBLE_EQ(design.mahalanobis(m.anchored_feature(0, got.x, got.a)), best);
}

TEST(Uncertain, IdenticalFeaturesReturnFirstVisited) {
  TokenMdp m = gen_token_mdp(1, 3, 2, 0.5, 1.0, 7, true);
  for (int i = 0; i < m.features[0].rows(); ++i) m.features[0].row(i) = (RowMat(1, 2) << 0.3, 0.4).finished();
  m.reward_mean[0].setZero();
  m.theta_star[0].setZero();
  auto pick = [&] {
    QueryLedger ledger;
    MdpEnv env(m, ledger, Rng(10));
    Rng rng(11);
    DesignMatrix design(2, 1.0);
    const std::vector<LayerSnapshot> policy(1, LayerSnapshot{Vec::Zero(2), std::make_shared<const DesignMatrix>(design)});
    return uncertain_state_action(1, {{{0, 0}}}, policy, design, small_params(1), env, rng);
  };
  const StateAction a = pick(), b = pick();
  EXPECT_EQ(a, b);
}

TEST(Mtss, TriggerArithmetic) {
  // anchored norm^2 at round t is 4 / (lambda + 4 (t - 1)); with lambda = 1 and nu^2 / 4 = 1/16
  // the first certified round is t = 17
  const TokenMdp m = line_mdp();
  QueryLedger ledger;
  MdpEnv env(m, ledger, Rng(12));
  const MtssResult r = mtss(env, small_params(20), Rng(13), true);
  for (int t = 1; t <= 20; ++t) {
    EXPECT_NEAR(r.iterations[t - 1].trigger, 4.0 / (1.0 + 4.0 * (t - 1)), 1e-12);
    EXPECT_EQ(r.iterations[t - 1].certified, t >= 17);
  }
  EXPECT_TRUE(r.certified);
  EXPECT_EQ(r.round, 20);
  EXPECT_NEAR(*r.exact_regret, 0.0, 1e-3);
}

TEST(Mtss, ResetsMatchPrediction) {
  const TokenMdp m = gen_token_mdp(3, 3, 2, 0.5, 1.0, 8, true);
  QueryLedger ledger;
  MdpEnv env(m, ledger, Rng(14));
  const MtssParams p = small_params(5);
  const MtssResult r = mtss(env, p, Rng(15));
  EXPECT_EQ(r.ledger.resets, predicted_resets(p, 3));
  for (std::size_t i = 1; i < r.iterations.size(); ++i) {
    EXPECT_GE(r.iterations[i].ledger.resets, r.iterations[i - 1].ledger.resets);
    EXPECT_GE(r.iterations[i].ledger.t_data, r.iterations[i - 1].ledger.t_data);
  }
}

TEST(Mtss, DeterministicPerSeed) {
  const TokenMdp m = gen_token_mdp(2, 3, 2, 0.5, 1.0, 9, true);
  auto run = [&] {
    QueryLedger ledger;
    MdpEnv env(m, ledger, Rng(16));
    return mtss(env, small_params(4), Rng(17));
  };
  const MtssResult a = run(), b = run();
  EXPECT_EQ(a.ledger, b.ledger);
  for (int h = 1; h <= 2; ++h) EXPECT_EQ(a.state.thetas[h], b.state.thetas[h]);
}

TEST(Mtss, HorizonOneLearns) {
  const TokenMdp m = gen_token_mdp(1, 4, 2, 0.5, 1.0, 10, true);
  QueryLedger ledger;
  MdpEnv env(m, ledger, Rng(18));
  MtssParams p = MtssParams::desk(2, 1, 1.0, 0.15, 1.0, exact_c_cond(m));
  p.t_iters = 60;
  p.n_reg = 20, p.n_span = 20, p.n_span_bar = 20;
  const MtssResult r = mtss(env, p, Rng(19), true);
  EXPECT_TRUE(r.certified);
  EXPECT_LT(*r.exact_regret, 0.02);
}

TEST(Mtss, PolicyLawIsDistribution) {
  const TokenMdp m = gen_token_mdp(3, 4, 3, 0.5, 1.0, 11, true);
  MtssPolicy pi;
  pi.nu = 0.5;
  pi.sampler = RejectionConfig::make(0.5, 8.0, 0.05);
  Rng g(20);
  for (int h = 0; h < 3; ++h) pi.layers.push_back({test::in_ball(3, 1.0, g), std::make_shared<const DesignMatrix>(3, 0.5)});
  for (const RowMat& layer : mtss_policy_law(m, pi))
    for (Eigen::Index x = 0; x < layer.rows(); ++x) EXPECT_NEAR(layer.row(x).sum(), 1.0, 1e-12);
  EXPECT_GE(mtss_exact_regret(m, pi), -1e-12);
}

}  // namespace
}  // namespace klx
