#include <gtest/gtest.h>

#include "klx/baselines.hpp"
#include "klx/errors.hpp"
#include "klx/generators.hpp"
#include "support.hpp"

namespace klx {
namespace {

TEST(OnlineDpo, LedgerCounts) {
  const auto inst = gen_random_instance(3, 2, 10, 0.2, 1.0, 1);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(1), OracleMode::Strong);
  Rng rng(2);
  const BaselineResult r = online_dpo(o, 25, 1.0, rng, &inst);
  EXPECT_EQ(r.ledger.t_data, 50u);
  EXPECT_EQ(r.ledger.t_comp_strong, 50u);
  EXPECT_EQ(r.ledger.t_comp_weak, 0u);
  ASSERT_EQ(r.rounds.size(), 25u);
  for (std::size_t i = 1; i < r.rounds.size(); ++i) EXPECT_GE(r.rounds[i].ledger.t_data, r.rounds[i - 1].ledger.t_data);
}

TEST(OnlineDpo, FlatRewardsStayAtZero) {
  AlignmentInstance inst = gen_random_instance(3, 2, 10, 0.2, 1.0, 2);
  inst.theta_star.setZero();
  inst.reward_mean.setZero();
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(3), OracleMode::Strong);
  Rng rng(4);
  const BaselineResult r = online_dpo(o, 30, 1.0, rng, &inst);
  EXPECT_EQ(r.final_theta.norm(), 0.0);
  EXPECT_NEAR(*r.final_regret, 0.0, 1e-12);
}

TEST(OnlineDpo, NeedsStrongOracle) {
  const auto inst = gen_random_instance(3, 2, 10, 0.2, 1.0, 1);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(1), OracleMode::Weak);
  Rng rng(2);
  EXPECT_THROW(online_dpo(o, 2, 1.0, rng), CapabilityError);
}

TEST(OnlineDpo, LearnsEasyInstance) {
  const auto inst = gen_random_instance(3, 2, 10, 0.5, 1.0, 5);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(5), OracleMode::Strong);
  Rng rng(6);
  const BaselineResult r = online_dpo(o, 300, 1.0, rng, &inst);
  EXPECT_LT(*r.final_regret, 0.02);
}

TEST(Xpo, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  const auto inst = gen_random_instance(4, 3, 12, 0.3, 1.0, 7);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(8), OracleMode::Strong);
  for (int trial = 0; trial < 20; ++trial) {
    XpoObjective obj(o, exact_partition(inst), test::uniform_real(0.0, 1.0, rng), 0.5, 0.3);
    for (int i = 0; i < 10; ++i) {
      const int x = static_cast<int>(rng.below(3));
      obj.add({x, static_cast<int>(rng.below(12)), static_cast<int>(rng.below(12)), rng.uniform(), rng.uniform()});
    }
    const Vec theta = test::in_ball(4, 1.0, rng);
    const Vec g = obj.gradient(theta);
    for (int j = 0; j < 4; ++j) {
      const double h = 1e-6;
      Vec tp = theta, tm = theta;
      tp[j] += h, tm[j] -= h;
      EXPECT_NEAR(g[j], (obj.value(tp) - obj.value(tm)) / (2 * h), 1e-5 * (1 + std::abs(g[j])));
    }
  }
}

TEST(Xpo, AlphaZeroIsRidgeFit) {
  Rng rng(9);
  const auto inst = gen_random_instance(3, 2, 10, 0.3, 1.0, 9);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(10), OracleMode::Strong);
  XpoObjective obj(o, exact_partition(inst), 0.0, 1.0, 0.3);
  RegressionSet data(3);
  for (int i = 0; i < 15; ++i) {
    const XpoSample s{static_cast<int>(rng.below(2)), static_cast<int>(rng.below(10)), static_cast<int>(rng.below(10)),
                      rng.uniform(), rng.uniform()};
    obj.add(s);
    data.add(inst.feature(s.x, s.y1) - inst.feature(s.x, s.y2), s.r1 - s.r2);
  }
  const Vec theta = test::in_ball(3, 1.0, rng);
  EXPECT_NEAR(obj.value(theta), ridge_objective(data, 1.0, theta), 1e-12);
  GdConfig cfg;
  cfg.iterations = 2000;
  cfg.lambda = 1.0;
  const GdTrace tr = projected_gradient_descent(obj, Vec::Zero(3), inst.param_set(), cfg);
  EXPECT_LE((tr.theta - projected_least_squares(data, 1.0, inst.param_set())).norm(), 1e-6);
}

// Property: with backtracking the inner objective never increases.
TEST(Xpo, MonotoneWithBacktracking) {
  Rng rng(11);
  int monotone = 0;
  const int trials = 60;
  for (int trial = 0; trial < trials; ++trial) {
    const auto inst = gen_random_instance(3, 2, 10, 0.2, 1.0, 500 + trial);
    QueryLedger ledger;
    AlignmentOracle o(inst, ledger, Rng(trial), OracleMode::Strong);
    XpoObjective obj(o, exact_partition(inst), test::uniform_real(0.0, 2.0, rng), 1.0, 0.2);
    for (int i = 0; i < 20; ++i)
      obj.add({static_cast<int>(rng.below(2)), static_cast<int>(rng.below(10)), static_cast<int>(rng.below(10)),
               rng.uniform(), rng.uniform()});
    GdConfig cfg;
    cfg.step_size = 2.0;
    cfg.iterations = 50;
    const GdTrace tr = projected_gradient_descent(obj, test::in_ball(3, 1.0, rng), inst.param_set(), cfg);
    bool ok = true;
    for (std::size_t k = 1; k < tr.objective.size(); ++k) ok &= tr.objective[k] <= tr.objective[k - 1] + 1e-12;
    monotone += ok;
  }
  EXPECT_GE(monotone, static_cast<int>(0.95 * trials));
}

TEST(Xpo, LedgerSplitsStrongAndWeak) {
  const auto inst = gen_random_instance(3, 2, 10, 0.2, 1.0, 12);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(12), OracleMode::Strong);
  Rng rng(13);
  GdConfig cfg;
  cfg.alpha = 0.1;
  cfg.iterations = 10;
  const BaselineResult r = xpo(o, 15, cfg, exact_partition(inst), rng, &inst);
  EXPECT_EQ(r.ledger.t_data, 30u);
  EXPECT_EQ(r.ledger.t_comp_strong, 15u);
  EXPECT_EQ(r.ledger.t_comp_weak, 15u);
  for (const auto& rd : r.rounds) EXPECT_TRUE(rd.objective.has_value());
}

TEST(Regret, LinearPolicyAtThetaStarIsZero) {
  const auto inst = gen_random_instance(4, 3, 15, 0.2, 1.0, 14);
  EXPECT_NEAR(linear_policy_regret(inst, inst.theta_star), 0.0, 1e-12);
  EXPECT_GT(linear_policy_regret(inst, -inst.theta_star), 0.0);
}

}  // namespace
}  // namespace klx
