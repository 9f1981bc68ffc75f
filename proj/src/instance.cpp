#include "klx/instance.hpp"

#include <cmath>
#include <fmt/format.h>

#include "klx/errors.hpp"

namespace klx {

namespace {

constexpr double kProbTol = 1e-12;
constexpr double kNormTol = 1e-12;

void check_distribution(const Eigen::Ref<const Vec>& p, const std::string& what) {
  if (!p.allFinite() || (p.array() < 0.0).any())
    throw ValidationError(what + ": negative or non-finite probability");
  double s = p.sum();
  if (std::abs(s - 1.0) > kProbTol * std::max<double>(1.0, p.size()))
    throw ValidationError(fmt::format("{}: sums to {:.17g}", what, s));
}

}  // namespace

const char* to_string(NoiseModel m) {
  switch (m) {
    case NoiseModel::Deterministic: return "deterministic";
    case NoiseModel::UniformBounded: return "uniform";
    case NoiseModel::Bernoulli: return "bernoulli";
  }
  return "?";
}

NoiseModel noise_from_string(const std::string& s) {
  if (s == "deterministic") return NoiseModel::Deterministic;
  if (s == "uniform") return NoiseModel::UniformBounded;
  if (s == "bernoulli") return NoiseModel::Bernoulli;
  throw ValidationError("unknown noise model '" + s + "'");
}

const char* to_string(ParamGeometry g) { return g == ParamGeometry::Ball ? "ball" : "box"; }

ParamGeometry geometry_from_string(const std::string& s) {
  if (s == "ball") return ParamGeometry::Ball;
  if (s == "box") return ParamGeometry::Box;
  throw ValidationError("unknown geometry '" + s + "'");
}

void AlignmentInstance::validate() const {
  const int X = num_prompts, Y = num_responses, d = dim;
  if (X < 1 || Y < 1 || d < 1) throw ValidationError("instance: empty dimension");
  if (prompt_dist.size() != X || pi_ref.rows() != X || pi_ref.cols() != Y ||
      features.rows() != static_cast<Eigen::Index>(X) * Y || features.cols() != d ||
      theta_star.size() != d || reward_mean.rows() != X || reward_mean.cols() != Y)
    throw ValidationError("instance: table shape mismatch");
  if (!(beta > 0.0) || !(r_max > 0.0) || !(param_radius > 0.0))
    throw ValidationError("instance: beta, r_max and B must be positive");
  check_distribution(prompt_dist, "instance: rho");
  for (int x = 0; x < X; ++x) check_distribution(pi_ref.row(x).transpose(), fmt::format("instance: pi_ref(.|{})", x));
  if (!features.allFinite() || !reward_mean.allFinite() || !theta_star.allFinite())
    throw ValidationError("instance: non-finite table entry");
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    if (features.row(i).norm() > 1.0 + kNormTol) throw ValidationError("instance: feature norm exceeds 1");
  if (!param_set().contains(theta_star)) throw ValidationError("instance: theta* outside Theta");
  if (!(reward_lo < reward_hi)) throw ValidationError("instance: empty reward range");
  if ((reward_mean.array() < reward_lo - 1e-12).any() || (reward_mean.array() > reward_hi + 1e-12).any())
    throw ValidationError("instance: mean reward outside its range");
  if (noise == NoiseModel::Bernoulli && geometry == ParamGeometry::Ball && r_max != 1.0)
    throw ValidationError("instance: Bernoulli noise requires r_max = 1");
  if (geometry == ParamGeometry::Ball) {
    if (beta > r_max + 1e-12 || r_max > param_radius + 1e-12)
      throw ValidationError("instance: need beta <= r_max <= B");
    for (int x = 0; x < X; ++x) {
      Vec lin = features.middleRows(static_cast<Eigen::Index>(x) * Y, Y) * theta_star;
      if (lin.maxCoeff() - lin.minCoeff() > r_max + 1e-9)
        throw ValidationError("instance: reward differences exceed r_max");
    }
  }
}

void TokenMdp::validate() const {
  const int H = horizon, A = num_actions, d = dim;
  if (H < 1 || A < 1 || d < 1) throw ValidationError("mdp: empty dimension");
  if (static_cast<int>(num_states.size()) != H || static_cast<int>(reward_mean.size()) != H ||
      static_cast<int>(features.size()) != H || static_cast<int>(pi_ref.size()) != H ||
      static_cast<int>(transitions.size()) != H - 1)
    throw ValidationError("mdp: per-layer table count mismatch");
  if (anchor < 0 || anchor >= A) throw ValidationError("mdp: anchor out of range");
  if (!(beta > 0.0) || !(r_max > 0.0) || !(param_radius > 0.0))
    throw ValidationError("mdp: beta, r_max and B must be positive");
  if (initial.size() != num_states[0]) throw ValidationError("mdp: initial distribution shape");
  check_distribution(initial, "mdp: P_0");
  for (int h = 0; h < H; ++h) {
    const int S = num_states[h];
    if (S < 1) throw ValidationError("mdp: layer without states");
    if (reward_mean[h].rows() != S || reward_mean[h].cols() != A || pi_ref[h].rows() != S ||
        pi_ref[h].cols() != A || features[h].rows() != static_cast<Eigen::Index>(S) * A ||
        features[h].cols() != d)
      throw ValidationError(fmt::format("mdp: layer {} shape mismatch", h));
    for (int x = 0; x < S; ++x) check_distribution(pi_ref[h].row(x).transpose(), fmt::format("mdp: pi_ref[{}]", h));
    if ((reward_mean[h].array() < -1e-12).any() || (reward_mean[h].array() > r_max + 1e-12).any())
      throw ValidationError(fmt::format("mdp: layer {} reward outside [0, r_max]", h));
    for (Eigen::Index i = 0; i < features[h].rows(); ++i)
      if (features[h].row(i).norm() > 1.0 + kNormTol) throw ValidationError("mdp: feature norm exceeds 1");
    if (h + 1 < H) {
      const RowMat& P = transitions[h];
      if (P.rows() != static_cast<Eigen::Index>(S) * A || P.cols() != num_states[h + 1])
        throw ValidationError(fmt::format("mdp: transition {} shape mismatch", h));
      for (Eigen::Index i = 0; i < P.rows(); ++i) check_distribution(P.row(i).transpose(), "mdp: transition row");
    }
  }
  if (!theta_star.empty()) {
    if (static_cast<int>(theta_star.size()) != H) throw ValidationError("mdp: theta* layer count");
    for (const Vec& t : theta_star) {
      if (t.size() != d) throw ValidationError("mdp: theta* dimension");
      if (realizable && t.norm() > param_radius + 1e-12) throw ValidationError("mdp: theta* outside ball");
    }
  }
}

}  // namespace klx
