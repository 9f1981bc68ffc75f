#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "klx/exact.hpp"
#include "klx/oracle.hpp"

namespace klx {

struct GdConfig {
  double step_size = 0.5;
  int iterations = 100;
  double alpha = 0.0;  // XPO optimism coefficient
  double lambda = 0.0;  // ridge weight; set to the OnlineDPO lambda so alpha = 0 matches its fit
  bool backtracking = true;
  void validate() const;
};

struct BaselineRound {
  int round;
  QueryLedger ledger;
  std::optional<double> exact_regret;  // of pi_{theta^t}
  std::optional<double> objective;     // XPO only
};

struct BaselineResult {
  std::vector<Vec> thetas;  // theta^1 .. theta^T
  Vec final_theta;          // fit on all T rounds of data
  QueryLedger ledger;
  std::vector<BaselineRound> rounds;
  std::optional<double> final_regret;
};

// (log Z_theta(x), E_{y ~ pi_theta(x)} phi(x, y)) with Z_theta(x) = E_ref exp(<theta, phi>/beta).
struct PartitionValue {
  double log_z;
  Vec mean_feature;
};
using PartitionFn = std::function<PartitionValue(int x, const Vec& theta)>;
PartitionFn exact_partition(const AlignmentInstance& inst);

double linear_policy_regret(const AlignmentInstance& inst, const Vec& theta);

BaselineResult online_dpo(AlignmentOracle& oracle, int rounds, double lambda, Rng& rng,
                          const AlignmentInstance* exact = nullptr);

struct XpoSample {
  int x, y1, y2;
  double r1, r2;
};

// XPO objective alpha sum log pi_theta(y2|x) + sum (<theta, phi1 - phi2> - (r1 - r2))^2 + lambda |theta|^2.
class XpoObjective {
 public:
  XpoObjective(const AlignmentOracle& oracle, PartitionFn partition, double alpha, double lambda, double beta);
  void add(const XpoSample& s);
  double value(const Vec& theta) const;
  Vec gradient(const Vec& theta) const;
  std::size_t size() const { return data_.size(); }

 private:
  const AlignmentOracle* oracle_;
  PartitionFn partition_;
  double alpha_, lambda_, beta_;
  std::vector<XpoSample> data_;
};

struct GdTrace {
  Vec theta;
  std::vector<double> objective;  // value after each inner iteration, starting with the initializer
};

GdTrace projected_gradient_descent(const XpoObjective& obj, const Vec& init, const ParamSet& set, const GdConfig& cfg);

BaselineResult xpo(AlignmentOracle& oracle, int rounds, const GdConfig& cfg, PartitionFn partition, Rng& rng,
                   const AlignmentInstance* exact = nullptr);

}  // namespace klx
