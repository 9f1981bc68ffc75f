#include "klx/baselines.hpp"

#include <cmath>

#include "klx/errors.hpp"

namespace klx {

void GdConfig::validate() const {
  if (!(step_size > 0.0)) throw ValidationError("gd: step_size must be positive");
  if (iterations < 1) throw ValidationError("gd: iterations must be at least 1");
  if (!(lambda >= 0.0) || !std::isfinite(alpha)) throw ValidationError("gd: bad lambda or alpha");
}

PartitionFn exact_partition(const AlignmentInstance& inst) {
  return [&inst](int x, const Vec& theta) {
    const auto block = inst.features.middleRows(static_cast<Eigen::Index>(x) * inst.num_responses, inst.num_responses);
    const SoftmaxRow row = softmax_row(inst.pi_ref.row(x).transpose(), block * theta, inst.beta);
    return PartitionValue{row.log_z, block.transpose() * row.probs};
  };
}

double linear_policy_regret(const AlignmentInstance& inst, const Vec& theta) {
  const OptimalSolution opt = exact_optimal(inst);
  return opt.value - finite_or_throw(jbeta_parallel(inst, policy_table(inst, linear_reward_table(inst, theta))));
}

BaselineResult online_dpo(AlignmentOracle& oracle, int rounds, double lambda, Rng& rng, const AlignmentInstance* exact) {
  if (oracle.mode() != OracleMode::Strong) throw CapabilityError("online_dpo needs a strong oracle");
  (void)rng;  // all randomness is inside the oracle
  BaselineResult res;
  RegressionSet data(oracle.dim());
  const ParamSet set = oracle.param_set();
  for (int t = 0; t < rounds; ++t) {
    Vec theta = projected_least_squares(data, lambda, set);
    const int x = oracle.draw_prompt();
    const SampleDraw a = oracle.strong_sample(x, theta);
    const SampleDraw b = oracle.strong_sample(x, theta);
    const double r1 = oracle.reward_query(x, a.response);
    const double r2 = oracle.reward_query(x, b.response);
    data.add(a.feature - b.feature, r1 - r2);
    BaselineRound rec{t + 1, oracle.ledger(), std::nullopt, std::nullopt};
    if (exact) rec.exact_regret = linear_policy_regret(*exact, theta);
    res.rounds.push_back(rec);
    res.thetas.push_back(std::move(theta));
  }
  res.final_theta = projected_least_squares(data, lambda, set);
  res.ledger = oracle.ledger();
  if (exact) res.final_regret = linear_policy_regret(*exact, res.final_theta);
  return res;
}

XpoObjective::XpoObjective(const AlignmentOracle& oracle, PartitionFn partition, double alpha, double lambda, double beta)
    : oracle_(&oracle), partition_(std::move(partition)), alpha_(alpha), lambda_(lambda), beta_(beta) {}

void XpoObjective::add(const XpoSample& s) { data_.push_back(s); }

double XpoObjective::value(const Vec& theta) const {
  double v = lambda_ * theta.squaredNorm();
  for (const XpoSample& s : data_) {
    const auto f1 = oracle_->feature(s.x, s.y1);
    const auto f2 = oracle_->feature(s.x, s.y2);
    const double resid = theta.dot(f1 - f2) - (s.r1 - s.r2);
    v += resid * resid;
    if (alpha_ != 0.0) {
      // log pi_theta(y2|x) up to the constant log pi_ref(y2|x)
      v += alpha_ * (theta.dot(f2) / beta_ - partition_(s.x, theta).log_z);
    }
  }
  return v;
}

Vec XpoObjective::gradient(const Vec& theta) const {
  Vec g = 2.0 * lambda_ * theta;
  for (const XpoSample& s : data_) {
    const auto f1 = oracle_->feature(s.x, s.y1);
    const auto f2 = oracle_->feature(s.x, s.y2);
    const Vec diff = f1 - f2;
    g += 2.0 * (theta.dot(diff) - (s.r1 - s.r2)) * diff;
    if (alpha_ != 0.0) g += alpha_ * (f2 - partition_(s.x, theta).mean_feature) / beta_;
  }
  if (!g.allFinite()) throw std::runtime_error("xpo: non-finite gradient");
  return g;
}

GdTrace projected_gradient_descent(const XpoObjective& obj, const Vec& init, const ParamSet& set, const GdConfig& cfg) {
  cfg.validate();
  GdTrace tr{set.project(init), {}};
  double cur = obj.value(tr.theta);
  tr.objective.push_back(cur);
  for (int k = 0; k < cfg.iterations; ++k) {
    const Vec g = obj.gradient(tr.theta);
    double eta = cfg.step_size;
    Vec next = set.project(tr.theta - eta * g);
    double val = obj.value(next);
    if (cfg.backtracking) {
      // Armijo on the projected step; give up (stay put) after 40 halvings
      int tries = 0;
      while (val > cur - 1e-4 * g.dot(tr.theta - next) && tries < 40) {
        eta *= 0.5;
        next = set.project(tr.theta - eta * g);
        val = obj.value(next);
        ++tries;
      }
      if (val > cur) next = tr.theta, val = cur;
    }
    tr.theta = std::move(next);
    cur = val;
    tr.objective.push_back(cur);
  }
  return tr;
}

BaselineResult xpo(AlignmentOracle& oracle, int rounds, const GdConfig& cfg, PartitionFn partition, Rng& rng,
                   const AlignmentInstance* exact) {
  if (oracle.mode() != OracleMode::Strong) throw CapabilityError("xpo needs a strong oracle");
  cfg.validate();
  BaselineResult res;
  XpoObjective obj(oracle, std::move(partition), cfg.alpha, cfg.lambda, oracle.beta());
  const ParamSet set = oracle.param_set();
  Rng ref_rng = rng.split("xpo-ref");
  Vec theta = Vec::Zero(oracle.dim());
  for (int t = 0; t < rounds; ++t) {
    GdTrace tr = projected_gradient_descent(obj, theta, set, cfg);
    theta = tr.theta;
    const int x = oracle.draw_prompt();
    const SampleDraw a = oracle.strong_sample(x, theta);
    const SampleDraw b = oracle.weak_sample(x, ref_rng);
    const double r1 = oracle.reward_query(x, a.response);
    const double r2 = oracle.reward_query(x, b.response);
    obj.add({x, a.response, b.response, r1, r2});
    BaselineRound rec{t + 1, oracle.ledger(), std::nullopt, tr.objective.back()};
    if (exact) rec.exact_regret = linear_policy_regret(*exact, theta);
    res.rounds.push_back(rec);
    res.thetas.push_back(theta);
  }
  res.final_theta = projected_gradient_descent(obj, theta, set, cfg).theta;
  res.ledger = oracle.ledger();
  if (exact) res.final_regret = linear_policy_regret(*exact, res.final_theta);
  return res;
}

}  // namespace klx
