#include "poststrat/regression.hpp"

#include <cmath>

#include "poststrat/errors.hpp"
#include "poststrat/least_squares.hpp"

namespace poststrat {

namespace {

void check_inputs(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const char* what) {
  if (X.rows() != y.size()) throw DataError(std::string(what) + ": outcome length does not match the design");
  if (!y.allFinite()) throw DataError(std::string(what) + ": outcome has missing or non-finite values");
  if (X.rows() <= X.cols()) {
    throw DataError(std::string(what) + ": need more observations than coefficients (" + std::to_string(X.rows()) +
                    " vs " + std::to_string(X.cols()) + ")");
  }
}

// (n/(n−k)) B Xᵀ diag(s²) X B
Eigen::MatrixXd sandwich(const Eigen::MatrixXd& X, const Eigen::VectorXd& score, const Eigen::MatrixXd& bread) {
  const double n = static_cast<double>(X.rows());
  const double k = static_cast<double>(X.cols());
  const Eigen::MatrixXd Xs = X.array().colwise() * score.array();
  return n / (n - k) * bread * (Xs.transpose() * Xs) * bread;
}

std::string column_label(const std::vector<std::string>& names, Eigen::Index c) {
  const auto u = static_cast<std::size_t>(c);
  return u < names.size() ? names[u] : "column " + std::to_string(c + 1);
}

double binomial_deviance(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  // −2 Σ [y η − log(1 + e^η)], evaluated without overflow.
  double d = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double e = eta(i);
    const double log1pexp = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    d += log1pexp - y(i) * e;
  }
  return 2.0 * d;
}

}  // namespace

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DataError("logit needs a proportion strictly between 0 and 1");
  return std::log(p / (1.0 - p));
}

double inv_logit(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

LinearFit linear_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, CovarianceType type) {
  check_inputs(X, y, "linear regression");
  const LeastSquares ls(X);
  LinearFit fit;
  fit.coef = ls.solve(y);
  const Eigen::VectorXd resid = y - X * fit.coef;
  fit.rss = resid.squaredNorm();
  const double dof = static_cast<double>(X.rows() - X.cols());
  fit.sigma = std::sqrt(fit.rss / dof);
  const Eigen::MatrixXd bread = ls.normal_inverse();
  fit.cov = type == CovarianceType::robust ? sandwich(X, resid, bread) : Eigen::MatrixXd(fit.rss / dof * bread);
  return fit;
}

LogisticFit logistic_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                         const std::vector<std::string>& column_names, CovarianceType type,
                         const LogisticOptions& options) {
  check_inputs(X, y, "logistic regression");
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw DataError("logistic regression: outcome must be 0/1");
  }
  const Eigen::Index n = X.rows();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(X.cols());
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(n);
  double deviance = binomial_deviance(y, eta);

  LogisticFit fit;
  bool converged = false;
  for (int it = 1; it <= options.max_iterations; ++it) {
    Eigen::VectorXd sw(n);
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = inv_logit(eta(i));
      const double w = std::max(mu * (1.0 - mu), 1e-300);
      sw(i) = std::sqrt(w);
      z(i) = sw(i) * (eta(i) + (y(i) - mu) / w);
    }
    const Eigen::MatrixXd A = X.array().colwise() * sw.array();
    const Eigen::VectorXd next_beta = LeastSquares(A).solve(z);
    const double step = (next_beta - beta).cwiseAbs().maxCoeff() / (1.0 + next_beta.cwiseAbs().maxCoeff());
    beta = next_beta;
    eta = X * beta;
    const double next = binomial_deviance(y, eta);
    fit.iterations = it;
    double extreme = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) extreme = std::min(extreme, std::min(inv_logit(eta(i)), 1.0 - inv_logit(eta(i))));
    const bool settled = std::abs(next - deviance) / (std::abs(next) + 0.1) < options.tolerance;
    const bool done = settled && (step < options.step_tolerance || extreme < 1e-8);
    deviance = next;
    if (done) {
      converged = true;
      break;
    }
  }

  double saturation = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = inv_logit(eta(i));
    saturation = std::min(saturation, std::min(mu, 1.0 - mu));
  }
  std::string diverging;
  for (Eigen::Index c = 0; c < beta.size(); ++c) {
    if (std::abs(beta(c)) > options.divergence_threshold) {
      diverging += (diverging.empty() ? "" : ", ") + column_label(column_names, c);
    }
  }
  if (!converged || (!diverging.empty() && saturation < 1e-8)) {
    throw NumericalError(std::string("logistic regression ") +
                         (converged ? "shows separation" : "did not converge in " +
                                                               std::to_string(options.max_iterations) + " iterations") +
                         (diverging.empty() ? std::string() : "; diverging coefficients: " + diverging));
  }

  Eigen::VectorXd sw(n);
  Eigen::VectorXd resid(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = inv_logit(eta(i));
    sw(i) = std::sqrt(mu * (1.0 - mu));
    resid(i) = y(i) - mu;
  }
  const Eigen::MatrixXd bread = LeastSquares(X.array().colwise() * sw.array()).normal_inverse();
  fit.coef = beta;
  fit.deviance = deviance;
  fit.cov = type == CovarianceType::robust ? sandwich(X, resid, bread) : bread;
  return fit;
}

}  // namespace poststrat
