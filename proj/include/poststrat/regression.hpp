#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace poststrat {

enum class CovarianceType { conventional, robust };

struct LinearFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;
  double sigma = 0.0;  // residual sd, RSS/(n − k)
  double rss = 0.0;
};

/// OLS with conventional σ̂²(XᵀX)⁻¹ or HC1 sandwich covariance.
LinearFit linear_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     CovarianceType type = CovarianceType::conventional);

struct LogisticOptions {
  double tolerance = 1e-10;       // relative change in deviance
  double step_tolerance = 1e-13;  // max |Δβ| / (1 + max |β|)
  int max_iterations = 100;
  /// |β_j| beyond this with fitted probabilities at 0 or 1 signals separation.
  double divergence_threshold = 15.0;
};

struct LogisticFit {
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;
  double deviance = 0.0;
  int iterations = 0;
};

/// Binomial maximum likelihood by iteratively reweighted least squares.
/// Throws NumericalError naming the diverging columns on (quasi-)separation
/// or non-convergence.
LogisticFit logistic_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const std::vector<std::string>& column_names = {},
                         CovarianceType type = CovarianceType::conventional, const LogisticOptions& options = {});

double logit(double p);
double inv_logit(double x);

}  // namespace poststrat
