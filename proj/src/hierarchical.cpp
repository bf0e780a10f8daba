#include "poststrat/hierarchical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "poststrat/least_squares.hpp"

namespace poststrat {

namespace {

void require_sigma(double s, const std::string& what, bool allow_infinite) {
  if (std::isnan(s) || s < 0.0 || (!allow_infinite && !std::isfinite(s))) {
    throw ConfigError(what + " must be a non-negative number, got " + std::to_string(s));
  }
}

// Columns that survive (σ_b > 0) with their prior precisions.
struct ActiveColumns {
  std::vector<Eigen::Index> index;
  Eigen::VectorXd precision;
};

ActiveColumns active_columns(const DesignMatrices& m, const VarianceComponents& vc) {
  ActiveColumns out;
  std::vector<double> kept;
  for (Eigen::Index c = 0; c < m.columns(); ++c) {
    const int b = m.column_batch[static_cast<std::size_t>(c)];
    double prec = 0.0;
    if (b >= 0) {
      const auto& name = m.batch_names[static_cast<std::size_t>(b)];
      const auto it = vc.sigma_batch.find(name);
      if (it == vc.sigma_batch.end()) throw ConfigError("no standard deviation given for batch '" + name + "'");
      if (it->second == 0.0) continue;
      if (std::isfinite(it->second)) prec = 1.0 / (it->second * it->second);
    }
    out.index.push_back(c);
    kept.push_back(prec);
  }
  out.precision = Eigen::Map<Eigen::VectorXd>(kept.data(), static_cast<Eigen::Index>(kept.size()));
  return out;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& A, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(A.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = A.col(cols[c]);
  return out;
}

// [X/σ_y ; diag(√prec)] restricted to penalized rows, so that AᵀA = XᵀX/σ_y² + P.
LeastSquares penalized_system(const Eigen::MatrixXd& X, const Eigen::VectorXd& precision, double sigma_y) {
  Eigen::Index penalized = 0;
  for (Eigen::Index c = 0; c < precision.size(); ++c) penalized += precision(c) > 0.0;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(X.rows() + penalized, X.cols());
  A.topRows(X.rows()) = X / sigma_y;
  Eigen::Index r = X.rows();
  for (Eigen::Index c = 0; c < precision.size(); ++c) {
    if (precision(c) > 0.0) A(r++, c) = std::sqrt(precision(c));
  }
  return LeastSquares(A);
}

void check_sigma_y(const VarianceComponents& vc) {
  if (!(vc.sigma_y > 0.0) || !std::isfinite(vc.sigma_y)) {
    throw ConfigError("sigma_y must be positive and finite");
  }
}

}  // namespace

VarianceComponents VarianceComponents::exchangeable(double sigma_y, double sigma_theta, std::string batch) {
  VarianceComponents vc;
  vc.sigma_y = sigma_y;
  vc.sigma_batch.emplace(std::move(batch), sigma_theta);
  vc.validate();
  return vc;
}

double VarianceComponents::sigma_theta() const {
  if (sigma_batch.size() != 1) {
    throw ConfigError("the exchangeable model needs exactly one batch variance, got " +
                      std::to_string(sigma_batch.size()));
  }
  return sigma_batch.begin()->second;
}

void VarianceComponents::validate() const {
  check_sigma_y(*this);
  for (const auto& [name, s] : sigma_batch) require_sigma(s, "sigma for batch '" + name + "'", true);
}

Eigen::VectorXd gls_ridge_fit(const DesignMatrices& matrices, const Eigen::VectorXd& y,
                              const VarianceComponents& vc) {
  vc.validate();
  if (y.size() != matrices.rows()) throw DataError("gls: outcome length does not match the design");
  if (!y.allFinite()) throw DataError("gls: outcome has missing or non-finite values");
  const auto active = active_columns(matrices, vc);
  const Eigen::MatrixXd Xa = select_columns(matrices.X, active.index);
  const LeastSquares ls = penalized_system(Xa, active.precision, vc.sigma_y);
  const Eigen::VectorXd beta_a = ls.normal_solve(Xa.transpose() * y / (vc.sigma_y * vc.sigma_y));

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(matrices.columns());
  for (std::size_t c = 0; c < active.index.size(); ++c) beta(active.index[c]) = beta_a(static_cast<Eigen::Index>(c));
  return beta;
}

WeightVector bayes_implied_weights(const DesignMatrices& matrices, const VarianceComponents& vc) {
  vc.validate();
  if (!matrices.has_population()) throw DataError("population counts have not been attached");
  const auto active = active_columns(matrices, vc);
  const Eigen::MatrixXd Xa = select_columns(matrices.X, active.index);
  const Eigen::MatrixXd Xpop_a = select_columns(matrices.X_pop, active.index);
  const LeastSquares ls = penalized_system(Xa, active.precision, vc.sigma_y);

  const double s2 = vc.sigma_y * vc.sigma_y;
  const Eigen::VectorXd g = ls.normal_solve(Xpop_a.transpose() * matrices.N_pop);
  const double scale = static_cast<double>(matrices.rows()) / matrices.population_total();

  WeightVector w;
  w.unit = scale * (Xa * g) / s2;
  w.cell = scale * (Xpop_a * g) / s2;
  w.normalization = matrices.has_intercept() ? Normalization::sum_to_n : Normalization::unnormalized;
  w.source = WeightSource::hierarchical_regression;
  return w;
}

namespace {

// Sufficient statistics for repeated likelihood evaluations.
struct LikelihoodData {
  Eigen::MatrixXd G;  // XᵀX
  Eigen::VectorXd c;  // Xᵀy
  double yy = 0.0;
  double n = 0.0;
  std::vector<int> column_batch;
  std::size_t batches = 0;
};

LikelihoodData likelihood_data(const DesignMatrices& m, const Eigen::VectorXd& y) {
  if (y.size() != m.rows()) throw DataError("likelihood: outcome length does not match the design");
  if (!y.allFinite()) throw DataError("likelihood: outcome has missing or non-finite values");
  LikelihoodData d;
  d.G = m.X.transpose() * m.X;
  d.c = m.X.transpose() * y;
  d.yy = y.squaredNorm();
  d.n = static_cast<double>(m.rows());
  d.column_batch = m.column_batch;
  d.batches = m.batch_names.size();
  return d;
}

// -2 log L given σ_y and per-batch σ (finite, ≥ 0). Uses
// A = [X_u, ZΛ], M = AᵀA + σ_y² E (E identity on the batch block):
// |V| = σ_y^(2n) |I + ΛZᵀZΛ/σ_y²|, yᵀP y = (yᵀy − γᵀAᵀy)/σ_y² with γ = M⁻¹Aᵀy.
double minus_two_log_lik(const LikelihoodData& d, double sigma_y, const std::vector<double>& sigma_b) {
  const Eigen::Index k = d.G.rows();
  Eigen::VectorXd lambda(k);
  Eigen::VectorXd penal(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const int b = d.column_batch[static_cast<std::size_t>(c)];
    lambda(c) = b < 0 ? 1.0 : sigma_b[static_cast<std::size_t>(b)];
    penal(c) = b < 0 ? 0.0 : 1.0;
  }
  const double s2 = sigma_y * sigma_y;
  Eigen::MatrixXd M = lambda.asDiagonal() * d.G * lambda.asDiagonal();
  M.diagonal() += s2 * penal;
  const Eigen::VectorXd rhs = lambda.cwiseProduct(d.c);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  if (ldlt.info() != Eigen::Success) throw NumericalError("likelihood: system is not positive definite");
  const Eigen::VectorXd gamma = ldlt.solve(rhs);
  double Q = d.yy - gamma.dot(rhs);
  Q = std::max(Q, 0.0);

  // log|I + ΛZᵀZΛ/σ_y²| over the batch block.
  std::vector<Eigen::Index> pen;
  for (Eigen::Index c = 0; c < k; ++c) {
    if (penal(c) > 0.0) pen.push_back(c);
  }
  double logdet = 0.0;
  if (!pen.empty()) {
    const auto q = static_cast<Eigen::Index>(pen.size());
    Eigen::MatrixXd B(q, q);
    for (Eigen::Index a = 0; a < q; ++a) {
      for (Eigen::Index b = 0; b < q; ++b) {
        B(a, b) = lambda(pen[a]) * d.G(pen[a], pen[b]) * lambda(pen[b]) / s2;
      }
      B(a, a) += 1.0;
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(B);
    if (llt.info() != Eigen::Success) throw NumericalError("likelihood: determinant term is not positive definite");
    logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  return d.n * std::log(2.0 * std::numbers::pi * s2) + logdet + Q / s2;
}

std::vector<double> batch_sigmas(const DesignMatrices& m, const VarianceComponents& vc) {
  std::vector<double> out;
  for (const auto& name : m.batch_names) {
    const auto it = vc.sigma_batch.find(name);
    if (it == vc.sigma_batch.end()) throw ConfigError("no sigma given for batch '" + name + "'");
    if (!std::isfinite(it->second)) {
      throw ConfigError("likelihood needs finite batch sigmas; batch '" + name + "' is infinite");
    }
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

double log_marginal_likelihood(const DesignMatrices& matrices, const Eigen::VectorXd& y,
                               const VarianceComponents& vc) {
  vc.validate();
  const auto d = likelihood_data(matrices, y);
  return -0.5 * minus_two_log_lik(d, vc.sigma_y, batch_sigmas(matrices, vc));
}

VarianceComponents fit_variance_components(const DesignMatrices& matrices, const Eigen::VectorXd& y,
                                           const VarianceFitOptions& options) {
  if (matrices.batch_names.empty()) throw ConfigError("variance fit: the design has no batch terms");
  const auto d = likelihood_data(matrices, y);
  Eigen::Index unpenalized = 0;
  for (int b : matrices.column_batch) unpenalized += b < 0;
  if (static_cast<Eigen::Index>(d.n) <= unpenalized) {
    throw DataError("variance fit: need more respondents than unpenalized coefficients");
  }
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().sum() / (d.n - 1.0));
  if (!(sd > 0.0)) throw DataError("variance fit: outcome has zero variance");

  const std::size_t nb = matrices.batch_names.size();
  // Parameters on the log scale: [log σ_y, log σ_b...].
  std::vector<double> theta(nb + 1, std::log(sd * 0.5));
  const double lo = std::log(sd * 1e-6);
  const double hi_y = std::log(sd * 10.0);
  const double hi_b = std::log(sd * 100.0);

  auto objective = [&](const std::vector<double>& t) {
    std::vector<double> sb(nb);
    for (std::size_t b = 0; b < nb; ++b) sb[b] = std::exp(t[b + 1]);
    return minus_two_log_lik(d, std::exp(t[0]), sb);
  };
  auto to_components = [&](const std::vector<double>& t) {
    VarianceComponents vc;
    vc.sigma_y = std::exp(t[0]);
    for (std::size_t b = 0; b < nb; ++b) vc.sigma_batch[matrices.batch_names[b]] = std::exp(t[b + 1]);
    return vc;
  };

  const int bits = static_cast<int>(std::ceil(-std::log2(options.tolerance))) + 1;
  double current = objective(theta);
  for (int cycle = 0; cycle < options.max_cycles; ++cycle) {
    double max_change = 0.0;
    const double start = current;
    for (std::size_t p = 0; p <= nb; ++p) {
      auto t = theta;
      auto f = [&](double x) {
        t[p] = x;
        return objective(t);
      };
      boost::uintmax_t iters = static_cast<boost::uintmax_t>(options.max_evaluations);
      const auto [x, fx] = boost::math::tools::brent_find_minima(f, lo, p == 0 ? hi_y : hi_b, bits, iters);
      if (fx < current) {
        max_change = std::max(max_change, std::abs(x - theta[p]));
        theta[p] = x;
        current = fx;
      }
    }
    const bool flat = start - current <= 1e-12 * (1.0 + std::abs(current));
    if (max_change < options.cycle_tolerance || flat) return to_components(theta);
  }
  throw VarianceFitError("variance fit did not converge in " + std::to_string(options.max_cycles) + " cycles",
                         to_components(theta));
}

// --- exchangeable normal model --------------------------------------------

namespace {

struct Exchangeable {
  double sigma_y2 = 1.0;
  double sigma_theta = 1.0;
  bool complete_pooling() const { return sigma_theta == 0.0; }
  bool no_pooling() const { return std::isinf(sigma_theta); }
  // n σ_θ² / (σ_y² + n σ_θ²)
  double shrink(double n) const {
    if (n == 0.0 || complete_pooling()) return 0.0;
    if (no_pooling()) return 1.0;
    const double t2 = sigma_theta * sigma_theta;
    return n * t2 / (sigma_y2 + n * t2);
  }
};

Exchangeable exchangeable_params(const VarianceComponents& vc) {
  vc.validate();
  return {vc.sigma_y * vc.sigma_y, vc.sigma_theta()};
}

}  // namespace

ExchangeablePosterior exch_normal_posterior(const Eigen::VectorXd& ybar, const PoststratTable& table,
                                            const VarianceComponents& vc) {
  const auto p = exchangeable_params(vc);
  const auto n = table.sample_counts();
  const auto J = static_cast<Eigen::Index>(table.cells());
  if (ybar.size() != J) throw DataError("posterior: expected one sample mean per cell");
  for (Eigen::Index j = 0; j < J; ++j) {
    if (n[static_cast<std::size_t>(j)] > 0 && !std::isfinite(ybar(j))) {
      throw DataError("posterior: cell " + table.grid().cell_name(static_cast<std::size_t>(j)) +
                      " has respondents but no finite mean");
    }
  }
  if (table.sample_size() == 0) throw DataError("posterior: no respondents");

  ExchangeablePosterior out;
  out.theta.resize(J);
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index j = 0; j < J; ++j) {
    const double nj = static_cast<double>(n[static_cast<std::size_t>(j)]);
    if (nj == 0.0) continue;
    // Precision weight of ȳ_j for μ: n_j/(σ_y² + n_j σ_θ²), up to a constant.
    const double a = p.complete_pooling() ? nj : p.no_pooling() ? 1.0 : p.shrink(nj);
    num += a * ybar(j);
    den += a;
  }
  out.mu = num / den;
  for (Eigen::Index j = 0; j < J; ++j) {
    const double nj = static_cast<double>(n[static_cast<std::size_t>(j)]);
    const double s = p.shrink(nj);
    out.theta(j) = nj == 0.0 ? out.mu : s * ybar(j) + (1.0 - s) * out.mu;
  }
  return out;
}

Eigen::MatrixXd posterior_mean_coefficients(const PoststratTable& table, const VarianceComponents& vc) {
  const auto p = exchangeable_params(vc);
  const auto n = table.sample_counts();
  const auto J = static_cast<Eigen::Index>(table.cells());
  if (table.sample_size() == 0) throw DataError("posterior: no respondents");

  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(J, J);
  if (p.no_pooling()) {
    for (Eigen::Index k = 0; k < J; ++k) {
      if (n[static_cast<std::size_t>(k)] == 0) {
        throw DataError("posterior: with sigma_theta infinite, empty cell " +
                        table.grid().cell_name(static_cast<std::size_t>(k)) + " has no estimate");
      }
      c(k, k) = 1.0;
    }
    return c;
  }
  const double t2 = p.sigma_theta * p.sigma_theta;
  Eigen::VectorXd A(J);
  Eigen::VectorXd resid(J);  // (σ_y²/n_k) A_k = σ_y² / (σ_y² + n_k σ_θ²)
  for (Eigen::Index k = 0; k < J; ++k) {
    const double nk = static_cast<double>(n[static_cast<std::size_t>(k)]);
    A(k) = nk / (p.sigma_y2 + nk * t2);
    resid(k) = p.sigma_y2 / (p.sigma_y2 + nk * t2);
  }
  const double total = A.sum();
  for (Eigen::Index k = 0; k < J; ++k) {
    for (Eigen::Index j = 0; j < J; ++j) c(k, j) = resid(k) * A(j) / total;
    c(k, k) += t2 * A(k);
  }
  return c;
}

ShrinkageWeights exch_normal_weights(const PoststratTable& table, const VarianceComponents& vc) {
  const auto p = exchangeable_params(vc);
  if (!table.has_population()) throw DataError("population counts have not been attached");
  const auto n = table.sample_counts();
  const auto N = table.population();
  const auto J = static_cast<Eigen::Index>(table.cells());
  for (Eigen::Index j = 0; j < J; ++j) {
    if (n[static_cast<std::size_t>(j)] == 0) {
      throw DataError("closed-form shrinkage weights need a respondent in every cell; cell " +
                      table.grid().cell_name(static_cast<std::size_t>(j)) +
                      " is empty (use the general hierarchical weights)");
    }
  }
  const double n_total = static_cast<double>(table.sample_size());
  const double scale = n_total / table.population_total();

  ShrinkageWeights out;
  out.exact.resize(J);
  out.approximate.resize(J);
  out.shrink.resize(J);
  // R = Σ N_k/(σ_y² + n_kσ_θ²) / Σ n_k/(σ_y² + n_kσ_θ²); complete pooling gives N/n.
  double num = 0.0;
  double den = 0.0;
  const double t2 = p.sigma_theta * p.sigma_theta;
  for (Eigen::Index k = 0; k < J; ++k) {
    const double nk = static_cast<double>(n[static_cast<std::size_t>(k)]);
    const double inv = p.no_pooling() ? 1.0 / nk : 1.0 / (p.sigma_y2 + nk * t2);
    num += N[static_cast<std::size_t>(k)] * inv;
    den += nk * inv;
  }
  const double pooled = p.complete_pooling() ? 1.0 : scale * num / den;
  for (Eigen::Index j = 0; j < J; ++j) {
    const double nj = static_cast<double>(n[static_cast<std::size_t>(j)]);
    const double full = N[static_cast<std::size_t>(j)] / nj * scale;
    const double s = p.shrink(nj);
    out.shrink(j) = s;
    out.exact(j) = s * full + (1.0 - s) * pooled;
    out.approximate(j) = s * full + (1.0 - s);
  }
  return out;
}

Eigen::VectorXd approx_shrinkage_weights(const PoststratTable& table, const VarianceComponents& vc) {
  return exch_normal_weights(table, vc).approximate;
}

}  // namespace poststrat
