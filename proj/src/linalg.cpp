#include "klx/linalg.hpp"

#include <cmath>

#include "klx/errors.hpp"

namespace klx {

namespace {
constexpr double kMaxUpdateNorm = 2.0 + 1e-9;
}

DesignMatrix::DesignMatrix(int dim, double lambda) : lambda_(lambda) {
  if (dim < 1) throw ValidationError("DesignMatrix: dim must be positive");
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw ValidationError("DesignMatrix: lambda must be positive and finite");
  sigma_ = lambda * Mat::Identity(dim, dim);
  sigma_inv_ = (1.0 / lambda) * Mat::Identity(dim, dim);
  scratch_.resize(dim);
}

void DesignMatrix::rank_one_update(const VecRef& v) {
  if (v.size() != dim()) throw ValidationError("DesignMatrix: dimension mismatch");
  if (!v.allFinite()) throw ValidationError("DesignMatrix: non-finite update vector");
  if (v.norm() > kMaxUpdateNorm) throw ValidationError("DesignMatrix: update norm exceeds 2");
  if (v.isZero(0.0)) return;

  sigma_.noalias() += v * v.transpose();
  ++updates_;
  if (updates_ % kRefactorEvery == 0) {
    refactorize();
    return;
  }
  scratch_.noalias() = sigma_inv_ * v;
  const double denom = 1.0 + v.dot(scratch_);
  sigma_inv_.noalias() -= (scratch_ / denom) * scratch_.transpose();
}

void DesignMatrix::refactorize() {
  Eigen::LLT<Mat> llt(sigma_);
  sigma_inv_ = llt.solve(Mat::Identity(dim(), dim()));
  sigma_inv_ = 0.5 * (sigma_inv_ + sigma_inv_.transpose()).eval();
}

double DesignMatrix::mahalanobis_sq(const VecRef& v) const {
  if (v.size() != dim()) throw ValidationError("DesignMatrix: dimension mismatch");
  return std::max(0.0, v.dot(sigma_inv_ * v));
}

double DesignMatrix::mahalanobis(const VecRef& v) const { return std::sqrt(mahalanobis_sq(v)); }

Vec ParamSet::project(const Vec& theta) const {
  if (geometry == ParamGeometry::Box) return theta.cwiseMax(-radius).cwiseMin(radius);
  const double n = theta.norm();
  if (n <= radius) return theta;
  return theta * (radius / n);
}

bool ParamSet::contains(const Vec& theta, double tol) const {
  if (geometry == ParamGeometry::Box) return theta.cwiseAbs().maxCoeff() <= radius + tol;
  return theta.norm() <= radius + tol;
}

void RegressionSet::add(const VecRef& feature, double target) {
  if (feature.size() != dim_) throw ValidationError("RegressionSet: dimension mismatch");
  if (!feature.allFinite() || !std::isfinite(target))
    throw ValidationError("RegressionSet: non-finite entry");
  x_.insert(x_.end(), feature.data(), feature.data() + dim_);
  y_.push_back(target);
}

Vec projected_least_squares(const RegressionSet& data, double lambda, const ParamSet& set) {
  if (lambda < 0.0 || !std::isfinite(lambda)) throw ValidationError("least squares: bad lambda");
  const int d = data.dim();
  if (data.empty()) return Vec::Zero(d);
  const auto X = data.features();
  const auto y = data.targets();
  Vec theta;
  if (lambda > 0.0) {
    Mat gram = X.transpose() * X;
    gram.diagonal().array() += lambda;
    theta = gram.ldlt().solve(X.transpose() * y);
  } else {
    theta = Mat(X).completeOrthogonalDecomposition().solve(Vec(y));
  }
  return set.project(theta);
}

Vec projected_least_squares(const RegressionSet& data, double lambda, const BallConstraint& ball) {
  return projected_least_squares(data, lambda, ParamSet{ParamGeometry::Ball, ball.radius});
}

double ridge_objective(const RegressionSet& data, double lambda, const Vec& theta) {
  double loss = lambda * theta.squaredNorm();
  if (!data.empty()) loss += (data.features() * theta - data.targets()).squaredNorm();
  return loss;
}

}  // namespace klx
