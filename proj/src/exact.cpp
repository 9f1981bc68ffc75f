#include "klx/exact.hpp"

#include <cmath>
#include <limits>

#include "klx/errors.hpp"

namespace klx {

double finite_or_throw(const RegularizedValue& v) {
  if (const double* d = std::get_if<double>(&v)) return *d;
  throw ValidationError("infinite KL divergence");
}

double SoftmaxRow::z() const { return std::exp(log_z); }

SoftmaxRow softmax_row(const VecRef& pi_ref, const VecRef& f, double beta) {
  const Eigen::Index n = pi_ref.size();
  SoftmaxRow out{Vec::Zero(n), 0.0};
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i)
    if (pi_ref[i] > 0.0) m = std::max(m, std::log(pi_ref[i]) + f[i] / beta);
  KahanSum s;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (pi_ref[i] <= 0.0) continue;
    out.probs[i] = std::exp(std::log(pi_ref[i]) + f[i] / beta - m);
    s.add(out.probs[i]);
  }
  out.probs /= s.value();
  out.log_z = m + std::log(s.value());
  return out;
}

SoftmaxRow exact_softmax(const AlignmentInstance& inst, const RowMat& f, int x) {
  if (f.rows() != inst.num_prompts || f.cols() != inst.num_responses)
    throw ValidationError("exact_softmax: table shape mismatch");
  if (!f.row(x).allFinite()) throw ValidationError("exact_softmax: non-finite f");
  return softmax_row(inst.pi_ref.row(x).transpose(), f.row(x).transpose(), inst.beta);
}

void validate_policy(const AlignmentInstance& inst, const PolicyTable& pi) {
  if (pi.rows() != inst.num_prompts || pi.cols() != inst.num_responses)
    throw ValidationError("policy: shape mismatch");
  for (int x = 0; x < inst.num_prompts; ++x) {
    if (!pi.row(x).allFinite() || (pi.row(x).array() < 0.0).any())
      throw ValidationError("policy: negative or non-finite entry");
    if (std::abs(pi.row(x).sum() - 1.0) > 1e-12 * std::max(1, inst.num_responses))
      throw ValidationError("policy: row does not sum to 1");
  }
}

RowMat linear_reward_table(const AlignmentInstance& inst, const Vec& theta) {
  Vec flat = inst.features * theta;
  RowMat out(inst.num_prompts, inst.num_responses);
  for (int x = 0; x < inst.num_prompts; ++x)
    out.row(x) = flat.segment(static_cast<Eigen::Index>(x) * inst.num_responses, inst.num_responses).transpose();
  return out;
}

namespace {

// Per-prompt J_beta contribution; nullopt-like NaN marks infinite KL.
double prompt_jbeta(const AlignmentInstance& inst, const PolicyTable& pi, int x) {
  KahanSum s;
  for (int y = 0; y < inst.num_responses; ++y) {
    const double p = pi(x, y);
    if (p <= 0.0) continue;
    const double q = inst.pi_ref(x, y);
    if (q <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    s.add(p * (inst.reward_mean(x, y) - inst.beta * std::log(p / q)));
  }
  return s.value();
}

RegularizedValue combine(const AlignmentInstance& inst, const Vec& per_prompt) {
  KahanSum s;
  for (int x = 0; x < inst.num_prompts; ++x) {
    if (inst.prompt_dist[x] <= 0.0) continue;
    if (std::isnan(per_prompt[x])) return InfiniteKl{};
    s.add(inst.prompt_dist[x] * per_prompt[x]);
  }
  return s.value();
}

}  // namespace

PolicyTable policy_table_serial(const AlignmentInstance& inst, const RowMat& f) {
  PolicyTable out(inst.num_prompts, inst.num_responses);
  for (int x = 0; x < inst.num_prompts; ++x)
    out.row(x) = softmax_row(inst.pi_ref.row(x).transpose(), f.row(x).transpose(), inst.beta).probs.transpose();
  return out;
}

PolicyTable policy_table(const AlignmentInstance& inst, const RowMat& f) {
  PolicyTable out(inst.num_prompts, inst.num_responses);
#pragma omp parallel for schedule(static)
  for (int x = 0; x < inst.num_prompts; ++x)
    out.row(x) = softmax_row(inst.pi_ref.row(x).transpose(), f.row(x).transpose(), inst.beta).probs.transpose();
  return out;
}

RegularizedValue jbeta_serial(const AlignmentInstance& inst, const PolicyTable& pi) {
  Vec per(inst.num_prompts);
  for (int x = 0; x < inst.num_prompts; ++x) per[x] = prompt_jbeta(inst, pi, x);
  return combine(inst, per);
}

RegularizedValue jbeta_parallel(const AlignmentInstance& inst, const PolicyTable& pi) {
  Vec per(inst.num_prompts);
#pragma omp parallel for schedule(static)
  for (int x = 0; x < inst.num_prompts; ++x) per[x] = prompt_jbeta(inst, pi, x);
  return combine(inst, per);  // serial reduction keeps the result thread-count independent
}

OptimalSolution exact_optimal(const AlignmentInstance& inst) {
  OptimalSolution sol{PolicyTable(inst.num_prompts, inst.num_responses), 0.0, Vec(inst.num_prompts)};
  KahanSum v;
  for (int x = 0; x < inst.num_prompts; ++x) {
    SoftmaxRow row = softmax_row(inst.pi_ref.row(x).transpose(), inst.reward_mean.row(x).transpose(), inst.beta);
    sol.policy.row(x) = row.probs.transpose();
    sol.log_z[x] = row.log_z;
    v.add(inst.prompt_dist[x] * inst.beta * row.log_z);
  }
  sol.value = v.value();
  return sol;
}

RegularizedValue exact_jbeta(const AlignmentInstance& inst, const PolicyTable& pi) {
  validate_policy(inst, pi);
  return jbeta_parallel(inst, pi);
}

double expected_reward(const AlignmentInstance& inst, const PolicyTable& pi) {
  KahanSum s;
  for (int x = 0; x < inst.num_prompts; ++x)
    for (int y = 0; y < inst.num_responses; ++y)
      s.add(inst.prompt_dist[x] * pi(x, y) * inst.reward_mean(x, y));
  return s.value();
}

RegularizedValue kl_divergence(const AlignmentInstance& inst, const PolicyTable& p, const PolicyTable& q) {
  KahanSum s;
  for (int x = 0; x < inst.num_prompts; ++x) {
    if (inst.prompt_dist[x] <= 0.0) continue;
    KahanSum row;
    for (int y = 0; y < inst.num_responses; ++y) {
      if (p(x, y) <= 0.0) continue;
      if (q(x, y) <= 0.0) return InfiniteKl{};
      row.add(p(x, y) * std::log(p(x, y) / q(x, y)));
    }
    s.add(inst.prompt_dist[x] * row.value());
  }
  return s.value();
}

CoverageResult coverage_coefficients(const AlignmentInstance& inst, const PolicyTable& pi) {
  CoverageResult out{0.0, Vec::Zero(inst.num_prompts)};
  for (int x = 0; x < inst.num_prompts; ++x) {
    double best = 0.0;
    for (int y = 0; y < inst.num_responses; ++y) {
      const double p = pi(x, y), q = inst.pi_ref(x, y);
      if (p <= 0.0) continue;
      best = std::max(best, q > 0.0 ? p / q : std::numeric_limits<double>::infinity());
    }
    out.per_prompt[x] = best;
    out.c_cov = std::max(out.c_cov, best);
  }
  return out;
}

Vec rejection_law(const VecRef& pi_ref, const VecRef& f, double beta, double m_threshold, std::uint64_t n_budget) {
  const SoftmaxRow sm = softmax_row(pi_ref, f, beta);
  const Eigen::Index n = pi_ref.size();
  Vec accept(n);
  KahanSum a;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lp = f[i] / beta - sm.log_z - std::log(m_threshold);
    accept[i] = pi_ref[i] * std::exp(std::min(0.0, lp));
    a.add(accept[i]);
  }
  if (!(a.value() > 0.0)) return pi_ref;
  const double fail = std::exp(static_cast<double>(n_budget) * std::log1p(-std::min(a.value(), 1.0)));
  return (1.0 - fail) * accept / a.value() + fail * pi_ref;
}

// ---- MDPs ----

QTables exact_qstar(const TokenMdp& mdp) {
  const int H = mdp.horizon, A = mdp.num_actions;
  QTables t;
  t.beta = mdp.beta;
  t.q.resize(H);
  t.v.resize(H);
  for (int h = H - 1; h >= 0; --h) {
    const int S = mdp.num_states[h];
    t.q[h] = mdp.reward_mean[h];
    if (h + 1 < H) t.q[h] += Eigen::Map<const RowMat>((mdp.transitions[h] * t.v[h + 1]).eval().data(), S, A);
    t.v[h].resize(S);
    for (int x = 0; x < S; ++x)
      t.v[h][x] = mdp.beta * softmax_row(mdp.pi_ref[h].row(x).transpose(), t.q[h].row(x).transpose(), mdp.beta).log_z;
  }
  return t;
}

MdpPolicy softmax_policy(const TokenMdp& mdp, const QTables& q) {
  MdpPolicy pi(mdp.horizon);
  for (int h = 0; h < mdp.horizon; ++h) {
    pi[h].resize(mdp.num_states[h], mdp.num_actions);
    for (int x = 0; x < mdp.num_states[h]; ++x)
      pi[h].row(x) = softmax_row(mdp.pi_ref[h].row(x).transpose(), q.q[h].row(x).transpose(), mdp.beta).probs.transpose();
  }
  return pi;
}

double initial_value(const TokenMdp& mdp, const QTables& q) {
  KahanSum s;
  for (int x = 0; x < mdp.num_states[0]; ++x) s.add(mdp.initial[x] * q.v[0][x]);
  return s.value();
}

namespace {

// sum_a pi(a) (Q(a) - beta log pi(a)/pi_ref(a)); NaN if pi puts mass off pi_ref's support.
double regularized_row(const VecRef& pi, const VecRef& pi_ref, const VecRef& q, double beta) {
  KahanSum s;
  for (Eigen::Index a = 0; a < pi.size(); ++a) {
    if (pi[a] <= 0.0) continue;
    if (pi_ref[a] <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    s.add(pi[a] * (q[a] - beta * std::log(pi[a] / pi_ref[a])));
  }
  return s.value();
}

}  // namespace

std::variant<QTables, InfiniteKl> exact_qpi(const TokenMdp& mdp, const MdpPolicy& pi) {
  const int H = mdp.horizon, A = mdp.num_actions;
  QTables t;
  t.beta = mdp.beta;
  t.q.resize(H);
  t.v.resize(H);
  for (int h = H - 1; h >= 0; --h) {
    const int S = mdp.num_states[h];
    t.q[h] = mdp.reward_mean[h];
    if (h + 1 < H) t.q[h] += Eigen::Map<const RowMat>((mdp.transitions[h] * t.v[h + 1]).eval().data(), S, A);
    t.v[h].resize(S);
    for (int x = 0; x < S; ++x) {
      const double v = regularized_row(pi[h].row(x).transpose(), mdp.pi_ref[h].row(x).transpose(),
                                       t.q[h].row(x).transpose(), mdp.beta);
      if (std::isnan(v)) return InfiniteKl{};
      t.v[h][x] = v;
    }
  }
  return t;
}

std::vector<Vec> state_occupancy(const TokenMdp& mdp, const MdpPolicy& pi) {
  const int H = mdp.horizon, A = mdp.num_actions;
  std::vector<Vec> d(H);
  d[0] = mdp.initial;
  for (int h = 0; h + 1 < H; ++h) {
    d[h + 1] = Vec::Zero(mdp.num_states[h + 1]);
    for (int x = 0; x < mdp.num_states[h]; ++x)
      for (int a = 0; a < A; ++a) {
        const double w = d[h][x] * pi[h](x, a);
        if (w != 0.0) d[h + 1] += w * mdp.transitions[h].row(x * A + a).transpose();
      }
  }
  return d;
}

RegularizedValue mdp_jbeta(const TokenMdp& mdp, const MdpPolicy& pi) {
  const auto d = state_occupancy(mdp, pi);
  KahanSum s;
  for (int h = 0; h < mdp.horizon; ++h)
    for (int x = 0; x < mdp.num_states[h]; ++x) {
      if (d[h][x] <= 0.0) continue;
      for (int a = 0; a < mdp.num_actions; ++a) {
        const double p = pi[h](x, a);
        if (p <= 0.0) continue;
        const double q = mdp.pi_ref[h](x, a);
        if (q <= 0.0) return InfiniteKl{};
        s.add(d[h][x] * p * (mdp.reward_mean[h](x, a) - mdp.beta * std::log(p / q)));
      }
    }
  return s.value();
}

PerformanceDifference performance_difference_check(const TokenMdp& mdp, const MdpPolicy& pi,
                                                   const MdpPolicy& pi_prime) {
  const double lhs = finite_or_throw(mdp_jbeta(mdp, pi)) - finite_or_throw(mdp_jbeta(mdp, pi_prime));
  auto qpi = exact_qpi(mdp, pi);
  if (std::holds_alternative<InfiniteKl>(qpi)) throw ValidationError("performance difference: infinite KL");
  const QTables& q = std::get<QTables>(qpi);
  const auto d = state_occupancy(mdp, pi_prime);
  KahanSum rhs;
  for (int h = 0; h < mdp.horizon; ++h)
    for (int x = 0; x < mdp.num_states[h]; ++x) {
      if (d[h][x] <= 0.0) continue;
      const auto ref = mdp.pi_ref[h].row(x).transpose();
      const auto qx = q.q[h].row(x).transpose();
      const double a = regularized_row(pi[h].row(x).transpose(), ref, qx, mdp.beta);
      const double b = regularized_row(pi_prime[h].row(x).transpose(), ref, qx, mdp.beta);
      if (std::isnan(a) || std::isnan(b)) throw ValidationError("performance difference: infinite KL");
      rhs.add(d[h][x] * (a - b));
    }
  return {lhs, rhs.value(), std::abs(lhs - rhs.value())};
}

double value_difference_residual(const TokenMdp& mdp, const QTables& qstar) {
  if (mdp.theta_star.empty()) throw ValidationError("value difference: theta* unknown");
  double worst = 0.0;
  for (int h = 0; h < mdp.horizon; ++h)
    for (int x = 0; x < mdp.num_states[h]; ++x)
      for (int a = 0; a < mdp.num_actions; ++a) {
        const double lin = mdp.theta_star[h].dot(mdp.anchored_feature(h, x, a));
        const double diff = qstar.q[h](x, a) - qstar.q[h](x, mdp.anchor);
        worst = std::max(worst, std::abs(diff - lin));
      }
  return worst;
}

double soft_bellman_residual(const TokenMdp& mdp, const QTables& q) {
  double worst = 0.0;
  for (int h = 0; h < mdp.horizon; ++h)
    for (int x = 0; x < mdp.num_states[h]; ++x) {
      // direct sum, deliberately not via softmax_row
      const double m = q.q[h].row(x).maxCoeff();
      double s = 0.0;
      for (int a = 0; a < mdp.num_actions; ++a) s += mdp.pi_ref[h](x, a) * std::exp((q.q[h](x, a) - m) / mdp.beta);
      worst = std::max(worst, std::abs(q.v[h][x] - (m + mdp.beta * std::log(s))));
    }
  return worst;
}

}  // namespace klx
