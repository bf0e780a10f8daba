#include "poststrat/least_squares.hpp"

#include <string>

#include "poststrat/errors.hpp"

namespace poststrat {

namespace {

Eigen::BDCSVD<Eigen::MatrixXd> thin_svd(const Eigen::MatrixXd& A) {
  return Eigen::BDCSVD<Eigen::MatrixXd>(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
}

Eigen::Index count_rank(const Eigen::VectorXd& s) {
  if (s.size() == 0 || !(s(0) > 0.0)) return 0;
  const double cutoff = kRankTolerance * s(0);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff) ++r;
  }
  return r;
}

}  // namespace

LeastSquares::LeastSquares(const Eigen::MatrixXd& A) {
  if (A.cols() == 0) throw NumericalError("least squares: empty design");
  if (A.rows() < A.cols()) {
    throw NumericalError("least squares: " + std::to_string(A.rows()) + " rows for " +
                         std::to_string(A.cols()) + " columns (rank deficient)");
  }
  if (!A.allFinite()) throw NumericalError("least squares: non-finite matrix entries");
  auto svd = thin_svd(A);
  s_ = svd.singularValues();
  const Eigen::Index r = count_rank(s_);
  if (r < A.cols()) {
    throw NumericalError("least squares: matrix is rank deficient (rank " + std::to_string(r) + " of " +
                         std::to_string(A.cols()) + ")");
  }
  u_ = svd.matrixU();
  v_ = svd.matrixV();
}

Eigen::Index LeastSquares::rank(const Eigen::MatrixXd& A) {
  if (A.cols() == 0) return 0;
  return count_rank(thin_svd(A).singularValues());
}

Eigen::VectorXd LeastSquares::solve(const Eigen::VectorXd& b) const {
  return v_ * ((u_.transpose() * b).array() / s_.array()).matrix();
}

Eigen::VectorXd LeastSquares::normal_solve(const Eigen::VectorXd& c) const {
  return v_ * ((v_.transpose() * c).array() / s_.array().square()).matrix();
}

Eigen::VectorXd LeastSquares::hat_apply(const Eigen::VectorXd& c) const {
  return u_ * ((v_.transpose() * c).array() / s_.array()).matrix();
}

Eigen::MatrixXd LeastSquares::normal_inverse() const {
  return v_ * s_.array().square().inverse().matrix().asDiagonal() * v_.transpose();
}

}  // namespace poststrat
