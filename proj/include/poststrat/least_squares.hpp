#pragma once

#include <Eigen/Dense>

namespace poststrat {

/// Singular values below this fraction of the largest declare rank deficiency.
inline constexpr double kRankTolerance = 1e-10;

/// Thin SVD of a tall matrix A = U S Vᵀ, used for every normal-equation style
/// solve in the library. (AᵀA)⁻¹ is never formed explicitly.
class LeastSquares {
 public:
  /// Throws NumericalError if A is rank deficient.
  explicit LeastSquares(const Eigen::MatrixXd& A);

  /// Rank of A under kRankTolerance, without throwing.
  static Eigen::Index rank(const Eigen::MatrixXd& A);

  Eigen::Index cols() const { return v_.rows(); }

  /// argmin_x ||A x - b||.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  /// (AᵀA)⁻¹ c.
  Eigen::VectorXd normal_solve(const Eigen::VectorXd& c) const;
  /// A (AᵀA)⁻¹ c, evaluated as U S⁻¹ Vᵀ c.
  Eigen::VectorXd hat_apply(const Eigen::VectorXd& c) const;
  /// (AᵀA)⁻¹ as a dense k×k matrix (for coefficient covariances).
  Eigen::MatrixXd normal_inverse() const;

 private:
  Eigen::MatrixXd u_;
  Eigen::VectorXd s_;
  Eigen::MatrixXd v_;
};

}  // namespace poststrat
