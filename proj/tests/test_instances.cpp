#include <gtest/gtest.h>

#include <sstream>

#include "klx/dnf.hpp"
#include "klx/errors.hpp"
#include "klx/exact.hpp"
#include "klx/generators.hpp"
#include "klx/oracle.hpp"
#include "klx/serialize.hpp"
#include "support.hpp"

namespace klx {
namespace {

// One prompt, Y responses with features e_y scaled to the given linear rewards via theta.
AlignmentInstance tiny(const Vec& pi_ref, const Vec& lin, double beta) {
  AlignmentInstance inst;
  const int Y = static_cast<int>(pi_ref.size());
  inst.num_prompts = 1;
  inst.num_responses = Y;
  inst.dim = Y;
  inst.prompt_dist = Vec::Ones(1);
  inst.pi_ref = pi_ref.transpose();
  inst.features = RowMat::Identity(Y, Y);
  inst.theta_star = lin;
  inst.reward_mean = (lin.array() - lin.minCoeff()).matrix().transpose();
  inst.beta = beta;
  inst.r_max = std::max(beta, lin.maxCoeff() - lin.minCoeff());
  inst.param_radius = std::max(inst.r_max, lin.norm());
  inst.reward_hi = inst.r_max;
  return inst;
}

TEST(RandomInstance, DeterministicPerSeed) {
  const auto a = gen_random_instance(4, 3, 7, 0.3, 1.0, 42);
  const auto b = gen_random_instance(4, 3, 7, 0.3, 1.0, 42);
  const auto c = gen_random_instance(4, 3, 7, 0.3, 1.0, 43);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.pi_ref, b.pi_ref);
  EXPECT_EQ(a.theta_star, b.theta_star);
  EXPECT_EQ(a.reward_mean, b.reward_mean);
  EXPECT_NE(a.features, c.features);
}

// Property: generated instances satisfy every documented invariant.
TEST(RandomInstance, InvariantsHold) {
  Rng rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const int d = test::uniform_int(1, 8, rng), X = test::uniform_int(1, 5, rng), Y = test::uniform_int(2, 30, rng);
    const double rmax = test::uniform_real(0.2, 1.0, rng);
    const double beta = test::uniform_real(0.05, rmax, rng);
    const double B = test::uniform_real(rmax, 3.0, rng);
    RandomInstanceOptions o;
    o.r_max = rmax;
    const auto inst = gen_random_instance(d, X, Y, beta, B, 100 + trial, o);
    EXPECT_NO_THROW(inst.validate());
    EXPECT_LE(inst.theta_star.norm(), B + 1e-12);
    for (int x = 0; x < X; ++x) {
      EXPECT_NEAR(inst.pi_ref.row(x).sum(), 1.0, 1e-12);
      EXPECT_GE(inst.pi_ref.row(x).minCoeff(), 0.0);
      for (int y = 0; y < Y; ++y) {
        EXPECT_LE(inst.feature(x, y).norm(), 1.0 + 1e-12);
        for (int y2 = 0; y2 < Y; ++y2) {
          const double diff = inst.theta_star.dot(inst.feature(x, y) - inst.feature(x, y2));
          EXPECT_LE(std::abs(diff), rmax + 1e-12);
          EXPECT_NEAR(inst.reward_mean(x, y) - inst.reward_mean(x, y2), diff, 1e-12);
        }
      }
    }
  }
}

TEST(RandomInstance, RejectsBadScales) {
  EXPECT_THROW(gen_random_instance(3, 1, 5, 2.0, 1.0, 1), GenerationError);  // beta > r_max
  EXPECT_THROW(gen_random_instance(3, 1, 1, 0.5, 1.0, 1), GenerationError);
}

TEST(CoverageHard, EpsRef) {
  EXPECT_DOUBLE_EQ(coverage_hard_eps_ref(100, 0.1), 0.01);
  EXPECT_DOUBLE_EQ(coverage_hard_eps_ref(1000, 0.1), std::exp(-5.0));
}

TEST(CoverageHard, Shape) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto inst = gen_coverage_hard_instance(100, 32, 0.1, 2, s);
    int nonzero = 0;
    for (int y = 0; y < 32; ++y) nonzero += inst.pi_ref(0, y) > 0.0;
    EXPECT_EQ(nonzero, 2);
    EXPECT_NEAR(inst.pi_ref.sum(), 1.0, 1e-12);
    const int ys = coverage_hard_target(inst);
    EXPECT_NEAR(inst.pi_ref(0, ys), 0.01, 1e-15);
    const double c = coverage_coefficients(inst, exact_optimal(inst).policy).c_cov;
    EXPECT_LE(c, 100.0 * (1 + 1e-12));
    EXPECT_LE(c, 1.0 / 0.01 + 1e-9);
    EXPECT_GE(finite_or_throw(exact_jbeta(inst, exact_optimal(inst).policy)), 0.5);
  }
}

TEST(Dnf, EmptyFormulaIsZero) {
  DnfFormula phi{3, 1, {}};
  EXPECT_EQ(dnf_opt(phi).value, 0);
}

TEST(Dnf, IdenticalClausesAllSatisfied) {
  DnfFormula phi{4, 2, {}};
  for (int i = 0; i < 5; ++i) phi.clauses.push_back({{0, 2}, {1, -1}, false});
  EXPECT_EQ(dnf_opt(phi).value, 5);
  EXPECT_EQ(dnf_value(phi, Assignment{1, 1, -1, 1}), 5);
  EXPECT_EQ(dnf_value(phi, Assignment{1, 1, 1, 1}), 0);
}

TEST(Dnf, OptimumMatchesExhaustiveLoop) {
  Rng rng(12);
  const DnfFormula phi = random_dnf(12, 30, 3, rng);
  int best = 0;
  for (int mask = 0; mask < (1 << 12); ++mask) {
    int sat = 0;
    for (const Clause& c : phi.clauses) {
      bool ok = true;
      for (std::size_t l = 0; l < c.vars.size(); ++l) ok &= ((mask >> c.vars[l]) & 1 ? 1 : -1) == c.signs[l];
      sat += ok;
    }
    best = std::max(best, sat);
  }
  const DnfOptimum opt = dnf_opt(phi);
  EXPECT_EQ(opt.value, best);
  EXPECT_EQ(dnf_value(phi, opt.assignment), best);
}

TEST(SerialRepetition, OneIsIdentity) {
  Rng rng(1);
  const DnfFormula phi = random_dnf(6, 5, 2, rng);
  const DnfFormula rep = serial_repetition(phi, 1);
  ASSERT_EQ(rep.m(), phi.m());
  for (int i = 0; i < phi.m(); ++i) {
    auto a = phi.clauses[i], b = rep.clauses[i];
    std::vector<std::pair<int, int>> la, lb;
    for (std::size_t l = 0; l < a.vars.size(); ++l) la.emplace_back(a.vars[l], a.signs[l]);
    for (std::size_t l = 0; l < b.vars.size(); ++l) lb.emplace_back(b.vars[l], b.signs[l]);
    std::sort(la.begin(), la.end());
    EXPECT_EQ(la, lb);
  }
}

TEST(SerialRepetition, FullySatisfiableSquares) {
  DnfFormula phi{3, 1, {{{0}, {1}, false}, {{1}, {1}, false}}};
  EXPECT_EQ(dnf_opt(serial_repetition(phi, 2)).value, 4);
}

TEST(SerialRepetition, ValueIsPower) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const DnfFormula phi = random_dnf(8, 5, 2, rng);
    EXPECT_EQ(dnf_opt(serial_repetition(phi, 2)).value, dnf_opt(phi).value * dnf_opt(phi).value);
  }
}

TEST(SerialRepetition, BudgetRefusal) {
  Rng rng(2);
  const DnfFormula phi = random_dnf(5, 10, 2, rng);
  EXPECT_THROW(serial_repetition(phi, 3, 999), BudgetError);
}

TEST(DnfInstance, SingleClause) {
  DnfFormula phi{3, 2, {{{0, 1}, {1, 1}, false}}};
  const auto inst = gen_dnf_instance(phi, 0.5);
  EXPECT_EQ(inst.theta_star[0], 1.0);
  EXPECT_EQ(inst.theta_star[1], 1.0);
  EXPECT_DOUBLE_EQ(inst.reward_mean(0, 1), 1.0);
  EXPECT_EQ(inst.reward_mean(0, 0), 0.0);
  EXPECT_NEAR(inst.pi_ref(0, 0), 1 - std::exp(-2.0), 1e-15);
}

TEST(DnfInstance, RewardsTrackSatisfaction) {
  Rng rng(20);
  const DnfFormula phi = random_dnf(10, 20, 3, rng);
  const auto inst = gen_dnf_instance(phi, 0.2);
  const DnfOptimum opt = dnf_opt(phi);
  double best = -1.0;
  for (int i = 0; i < phi.m(); ++i) {
    EXPECT_LE(inst.features.row(i + 1).lpNorm<1>(), 1.0 + 1e-12);
    const Clause& c = phi.clauses[i];
    bool sat = true;
    for (std::size_t l = 0; l < c.vars.size(); ++l) sat &= opt.assignment[c.vars[l]] == c.signs[l];
    const double r = inst.reward_mean(0, i + 1);
    if (sat) EXPECT_DOUBLE_EQ(r, 1.0);
    else EXPECT_LT(r, 1.0 - 1e-12);
    best = std::max(best, r);
  }
  EXPECT_EQ(best == 1.0, opt.value >= 1);
}

TEST(AutoregressiveGap, Parameters) {
  const TokenMdp m = gen_autoregressive_gap_instance(0.1);
  EXPECT_DOUBLE_EQ(m.param_radius, std::log(30.0));
  const MdpPolicy star = softmax_policy(m, exact_qstar(m));
  EXPECT_NEAR(star[0](0, 1) * star[1](1, 0), 1.0 / 1.1, 1e-12);
  EXPECT_GE(star[0](0, 1) * star[1](1, 0), 0.9);
}

TEST(TokenMdp, DeterministicAndRealizable) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const TokenMdp a = gen_token_mdp(3, 4, 3, 0.5, 1.0, s, true);
    const TokenMdp b = gen_token_mdp(3, 4, 3, 0.5, 1.0, s, true);
    for (int h = 0; h < 3; ++h) {
      EXPECT_EQ(a.features[h], b.features[h]);
      EXPECT_EQ(a.reward_mean[h], b.reward_mean[h]);
    }
    EXPECT_LE(value_difference_residual(a, exact_qstar(a)), 1e-9);
  }
}

TEST(TokenMdp, HorizonOneIsBandit) {
  const TokenMdp m = gen_token_mdp(1, 5, 3, 0.4, 1.0, 9, true);
  const AlignmentInstance inst = bandit_from_mdp(m);
  EXPECT_EQ(inst.num_responses, 5);
  EXPECT_EQ(inst.num_prompts, m.num_states[0]);
  const QTables q = exact_qstar(m);
  EXPECT_LE((q.q[0] - m.reward_mean[0]).cwiseAbs().maxCoeff(), 1e-12);
  const MdpPolicy pi = softmax_policy(m, q);
  EXPECT_LE((pi[0] - exact_optimal(inst).policy).cwiseAbs().maxCoeff(), 1e-12);
}

// ---- oracle ----

TEST(Oracle, PointMassReference) {
  Vec ref = Vec::Zero(3);
  ref[2] = 1.0;
  const auto inst = tiny(ref, Vec::Zero(3), 1.0);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(1), OracleMode::Weak);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(o.weak_sample(0).response, 2);
}

TEST(Oracle, WeakFrequenciesAndLedger) {
  const auto inst = tiny(Vec::Constant(4, 0.25), Vec::Zero(4), 1.0);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(2), OracleMode::Weak);
  const QueryLedger before = ledger;
  o.weak_sample(0);
  EXPECT_EQ(ledger - before, (QueryLedger{0, 1, 0, 0, 0}));
  Vec freq = Vec::Zero(4);
  for (int i = 0; i < 100000; ++i) freq[o.weak_sample(0).response] += 1e-5;
  for (int y = 0; y < 4; ++y) EXPECT_NEAR(freq[y], 0.25, 0.01);
}

TEST(Oracle, StrongSampleClosedForm) {
  auto inst = tiny(Vec::Constant(2, 0.5), Vec::Zero(2), 1.0);
  inst.param_radius = 2.0;
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(3), OracleMode::Strong);
  const Vec theta = (Vec(2) << std::log(3.0), 0.0).finished();
  double first = 0.0;
  for (int i = 0; i < 100000; ++i) first += o.strong_sample(0, theta).response == 0 ? 1e-5 : 0.0;
  EXPECT_NEAR(first, 0.75, 0.01);
  EXPECT_EQ(ledger.t_comp_strong, 100000u);
}

TEST(Oracle, StrongMatchesExactSoftmax) {
  const auto inst = gen_random_instance(3, 2, 6, 0.3, 1.0, 5);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(4), OracleMode::Strong);
  const Vec theta = inst.theta_star;
  const Vec exact = exact_softmax(inst, linear_reward_table(inst, theta), 1).probs;
  Vec freq = Vec::Zero(6);
  for (int i = 0; i < 100000; ++i) freq[o.strong_sample(1, theta).response] += 1e-5;
  EXPECT_LE(test::tv(freq, exact), 0.01);
}

TEST(Oracle, ZeroThetaIsReference) {
  const auto inst = gen_random_instance(3, 1, 6, 0.3, 1.0, 6);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(5), OracleMode::Strong);
  Vec freq = Vec::Zero(6);
  for (int i = 0; i < 100000; ++i) freq[o.strong_sample(0, Vec::Zero(3)).response] += 1e-5;
  EXPECT_LE(test::tv(freq, inst.pi_ref.row(0).transpose()), 0.01);
}

TEST(Oracle, WeakHandleRefusesStrongQuery) {
  const auto inst = gen_random_instance(3, 1, 6, 0.3, 1.0, 6);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(5), OracleMode::Weak);
  EXPECT_THROW(o.strong_sample(0, Vec::Zero(3)), CapabilityError);
}

TEST(Oracle, Rewards) {
  RandomInstanceOptions opt;
  opt.noise = NoiseModel::Bernoulli;
  const auto noisy = gen_random_instance(3, 1, 6, 0.3, 1.0, 8, opt);
  const auto clean = gen_random_instance(3, 1, 6, 0.3, 1.0, 8);
  QueryLedger l1, l2;
  AlignmentOracle a(clean, l1, Rng(6), OracleMode::Weak), b(noisy, l2, Rng(6), OracleMode::Weak);
  EXPECT_EQ(a.reward_query(0, 3), clean.reward_mean(0, 3));
  EXPECT_EQ(l1.t_data, 1u);
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) mean += b.reward_query(0, 2) * 1e-5;
  EXPECT_NEAR(mean, noisy.reward_mean(0, 2), 0.01);
  EXPECT_EQ(l2.t_data, 100000u);
}

TEST(Oracle, HistogramMatchesSingleDraws) {
  const auto inst = gen_random_instance(2, 1, 5, 0.3, 1.0, 10);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(7), OracleMode::Weak);
  Rng rng(8);
  std::vector<std::uint64_t> counts;
  Vec freq = Vec::Zero(5);
  for (int i = 0; i < 2000; ++i) {
    o.weak_sample_counts(0, 50, rng, counts);
    for (int y = 0; y < 5; ++y) freq[y] += counts[y] / 1e5;
  }
  EXPECT_EQ(ledger.t_comp_weak, 100000u);
  EXPECT_LE(test::tv(freq, inst.pi_ref.row(0).transpose()), 0.01);
}

TEST(MdpEnv, ResetRequiresVisit) {
  const TokenMdp m = gen_token_mdp(2, 3, 2, 0.5, 1.0, 1, true);
  QueryLedger ledger;
  MdpEnv env(m, ledger, Rng(1));
  const int x = env.start();
  EXPECT_EQ(ledger.t_prompt, 1u);
  EXPECT_NO_THROW(env.reset(0, x));
  EXPECT_EQ(ledger.resets, 1u);
  int other = (x + 1) % m.num_states[0];
  if (!env.visited(0, other)) EXPECT_THROW(env.reset(0, other), std::exception);
}

// ---- serialization ----

TEST(Serialize, RoundTripBitExact) {
  const AnyInstance a = gen_random_instance(4, 3, 9, 0.2, 1.0, 77);
  const AnyInstance m = gen_token_mdp(3, 3, 2, 0.5, 1.0, 78, true);
  for (const AnyInstance& inst : {a, m}) {
    std::stringstream ss;
    std::visit([&](const auto& v) { save_instance(ss, v); }, inst);
    const std::string first = ss.str();
    const AnyInstance back = load_instance(ss);
    std::stringstream again;
    std::visit([&](const auto& v) { save_instance(again, v); }, back);
    EXPECT_EQ(first, again.str());
  }
  const auto& orig = std::get<AlignmentInstance>(a);
  std::stringstream ss;
  save_instance(ss, orig);
  const auto back = std::get<AlignmentInstance>(load_instance(ss));
  EXPECT_EQ(orig.features, back.features);
  EXPECT_EQ(orig.pi_ref, back.pi_ref);
  EXPECT_EQ(orig.theta_star, back.theta_star);
}

TEST(Serialize, RejectsWrongHeader) {
  std::stringstream ss("not-an-instance 1\n");
  EXPECT_THROW(load_instance(ss), std::exception);
}

}  // namespace
}  // namespace klx
