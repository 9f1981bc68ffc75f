#include <gtest/gtest.h>

#include "klx/errors.hpp"
#include "klx/exact.hpp"
#include "klx/generators.hpp"
#include "klx/rejection.hpp"
#include "support.hpp"

namespace klx {
namespace {

double c_inf(const Vec& ref, const Vec& f, double beta) {
  const SoftmaxRow s = softmax_row(ref, f, beta);
  return (s.probs.array() / ref.array()).maxCoeff();
}

TEST(RejectionConfig, Budget) {
  const RejectionConfig c = RejectionConfig::make(0.5, 4.0, 0.05);
  EXPECT_EQ(c.n_budget(), static_cast<std::uint64_t>(std::ceil(16.0 * std::log(80.0))));
  EXPECT_THROW(RejectionConfig::make(0.5, 0.0, 0.05), ValidationError);
  EXPECT_THROW(RejectionConfig::make(0.5, 4.0, 1.5), ValidationError);
  EXPECT_THROW(RejectionConfig::make(0.0, 4.0, 0.1), ValidationError);
}

TEST(SoftmaxSampler, ZeroTiltIsReference) {
  const auto inst = gen_random_instance(2, 1, 6, 0.5, 1.0, 1);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(1), OracleMode::Weak);
  PromptProposal src(o, 0);
  const RejectionConfig cfg = RejectionConfig::make(0.5, 4.0, 0.05);
  Rng rng(2);
  Vec freq = Vec::Zero(6);
  int accepted = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const RejectionOutcome out = softmax_sampler([](int) { return 0.0; }, src, cfg, rng);
    EXPECT_NEAR(out.log_z_hat, 0.0, 1e-14);
    EXPECT_NEAR(out.log_density, 0.0, 1e-14);
    freq[out.response] += 1.0 / n;
    accepted += out.accepted;
  }
  EXPECT_LE(test::tv(freq, inst.pi_ref.row(0).transpose()), 0.015);
  EXPECT_GT(accepted, n - 5);
}

TEST(SoftmaxSampler, FirstRoundAcceptanceIsOneOverM) {
  // With f = 0 the first rejection round accepts with probability exactly 1/M,
  // so queries_used - N is geometric with mean M.
  const auto inst = gen_random_instance(2, 1, 6, 0.5, 1.0, 1);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(3), OracleMode::Weak);
  PromptProposal src(o, 0);
  const RejectionConfig cfg = RejectionConfig::make(0.5, 4.0, 0.05);
  Rng rng(4);
  double rounds = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const RejectionOutcome out = softmax_sampler([](int) { return 0.0; }, src, cfg, rng);
    rounds += static_cast<double>(out.queries_used - cfg.n_budget()) / n;
  }
  EXPECT_NEAR(rounds, 4.0, 0.1);
}

TEST(SoftmaxSampler, ConditionalLawMatchesSoftmax) {
  const auto inst = gen_random_instance(3, 1, 10, 0.5, 1.0, 11);
  const Vec ref = inst.pi_ref.row(0).transpose();
  const Vec f = inst.reward_mean.row(0).transpose();
  const RejectionConfig cfg = RejectionConfig::make(0.5, 4.0 * c_inf(ref, f, 0.5), 0.05);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(5), OracleMode::Weak);
  PromptProposal src(o, 0);
  Rng rng(6);
  Vec freq = Vec::Zero(10);
  int acc = 0, fails = 0;
  while (acc < 100000) {
    const RejectionOutcome out = softmax_sampler([&](int y) { return f[y]; }, src, cfg, rng);
    if (!out.accepted) {
      ++fails;
      continue;
    }
    freq[out.response] += 1e-5;
    ++acc;
  }
  EXPECT_LE(test::tv(freq, softmax_row(ref, f, 0.5).probs), 0.02);
  EXPECT_LE(fails, 5000);
}

TEST(SoftmaxSampler, LedgerChargesQueriesUsed) {
  const auto inst = gen_random_instance(3, 1, 10, 0.5, 1.0, 12);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(7), OracleMode::Weak);
  PromptProposal src(o, 0);
  Rng rng(8);
  const RejectionConfig cfg = RejectionConfig::make(0.5, 8.0, 0.1);
  std::uint64_t used = 0;
  for (int i = 0; i < 100; ++i)
    used += softmax_sampler([&](int y) { return inst.reward_mean(0, y); }, src, cfg, rng).queries_used;
  EXPECT_EQ(ledger.t_comp_weak, used);
  EXPECT_EQ(ledger.t_data, 0u);
}

TEST(SoftmaxSampler, DeterministicPerSeed) {
  const auto inst = gen_random_instance(3, 1, 10, 0.5, 1.0, 13);
  auto run = [&] {
    QueryLedger ledger;
    AlignmentOracle o(inst, ledger, Rng(9), OracleMode::Weak);
    PromptProposal src(o, 0);
    Rng rng(10);
    std::vector<int> out;
    for (int i = 0; i < 50; ++i)
      out.push_back(softmax_sampler([&](int y) { return inst.reward_mean(0, y); }, src,
                                    RejectionConfig::make(0.5, 10.0, 0.1), rng)
                        .response);
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(DensityEstimate, ErrorBoundAndRange) {
  const auto inst = gen_random_instance(3, 1, 10, 0.5, 1.0, 14);
  const Vec ref = inst.pi_ref.row(0).transpose();
  const Vec f = inst.reward_mean.row(0).transpose();
  const double c = c_inf(ref, f, 0.5);
  const RejectionConfig cfg = RejectionConfig::make(0.5, 4.0 * c * c, 0.05);
  const double log_z = softmax_row(ref, f, 0.5).log_z;
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(11), OracleMode::Weak);
  PromptProposal src(o, 0);
  Rng rng(12);
  int within = 0;
  for (int i = 0; i < 10000; ++i) {
    const RejectionOutcome out = softmax_sampler_density([&](int y) { return f[y]; }, src, cfg, rng);
    const double err = std::abs(out.log_density - (f[out.response] / 0.5 - log_z));
    within += err <= c * std::sqrt(2.0 / cfg.m_threshold);
    EXPECT_GE(out.log_density, -2.0 / 0.5);
    EXPECT_LE(out.log_density, 2.0 / 0.5);
  }
  EXPECT_GE(within, 9500);
}

TEST(DensityEstimate, FlatTiltIsOne) {
  const auto inst = gen_random_instance(3, 1, 10, 0.5, 1.0, 15);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(13), OracleMode::Weak);
  PromptProposal src(o, 0);
  Rng rng(14);
  const auto out = softmax_sampler_density([](int) { return 0.0; }, src, RejectionConfig::make(0.5, 4.0, 0.1), rng);
  EXPECT_NEAR(out.density(), 1.0, 1e-14);
}

TEST(SoftmaxSampler, EmpiricalLawMatchesRejectionLaw) {
  // Including the failure branch, the unconditional law equals rejection_law when Zhat = Z.
  // With a tiny budget the failure branch dominates, so compare loosely.
  const auto inst = gen_random_instance(2, 1, 4, 0.5, 1.0, 16);
  const Vec ref = inst.pi_ref.row(0).transpose();
  const Vec f = inst.reward_mean.row(0).transpose();
  const RejectionConfig cfg = RejectionConfig::make(0.5, 200.0, 0.5);
  QueryLedger ledger;
  AlignmentOracle o(inst, ledger, Rng(15), OracleMode::Weak);
  PromptProposal src(o, 0);
  Rng rng(16);
  Vec freq = Vec::Zero(4);
  for (int i = 0; i < 50000; ++i)
    freq[softmax_sampler([&](int y) { return f[y]; }, src, cfg, rng).response] += 1.0 / 50000;
  EXPECT_LE(test::tv(freq, rejection_law(ref, f, 0.5, 200.0, cfg.n_budget())), 0.02);
}

}  // namespace
}  // namespace klx
