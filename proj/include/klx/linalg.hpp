#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

namespace klx {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;

// sigma = lambda I + sum v v^T, inverse kept in sync by Sherman-Morrison with a
// full Cholesky refactorization every kRefactorEvery updates.
class DesignMatrix {
 public:
  static constexpr std::size_t kRefactorEvery = 256;

  DesignMatrix(int dim, double lambda);

  void rank_one_update(const VecRef& v);
  double mahalanobis_sq(const VecRef& v) const;
  double mahalanobis(const VecRef& v) const;

  int dim() const { return static_cast<int>(sigma_.rows()); }
  double lambda() const { return lambda_; }
  const Mat& sigma() const { return sigma_; }
  const Mat& sigma_inv() const { return sigma_inv_; }
  std::size_t updates() const { return updates_; }

 private:
  void refactorize();

  double lambda_;
  Mat sigma_;
  Mat sigma_inv_;
  Vec scratch_;
  std::size_t updates_ = 0;
};

enum class ParamGeometry { Ball, Box };

// The learner's parameter set Theta: Euclidean ball or l_inf box of radius B.
struct ParamSet {
  ParamGeometry geometry = ParamGeometry::Ball;
  double radius = 1.0;

  Vec project(const Vec& theta) const;
  bool contains(const Vec& theta, double tol = 1e-12) const;
};

struct BallConstraint {
  double radius;
  Vec project(const Vec& theta) const { return ParamSet{ParamGeometry::Ball, radius}.project(theta); }
};

// Growing regression dataset with rows stored contiguously.
class RegressionSet {
 public:
  explicit RegressionSet(int dim) : dim_(dim) {}

  void add(const VecRef& feature, double target);
  void clear() { x_.clear(), y_.clear(); }

  int dim() const { return dim_; }
  std::size_t size() const { return y_.size(); }
  bool empty() const { return y_.empty(); }

  Eigen::Map<const RowMat> features() const {
    return {x_.data(), static_cast<Eigen::Index>(size()), dim_};
  }
  Eigen::Map<const Vec> targets() const { return {y_.data(), static_cast<Eigen::Index>(size())}; }

 private:
  int dim_;
  std::vector<double> x_;
  std::vector<double> y_;
};

// Projection onto Theta of argmin lambda|theta|^2 + sum (<x_i,theta> - y_i)^2.
// lambda = 0 with a rank-deficient Gram matrix yields the minimum-norm solution.
Vec projected_least_squares(const RegressionSet& data, double lambda, const ParamSet& set);
Vec projected_least_squares(const RegressionSet& data, double lambda, const BallConstraint& ball);

double ridge_objective(const RegressionSet& data, double lambda, const Vec& theta);

}  // namespace klx
