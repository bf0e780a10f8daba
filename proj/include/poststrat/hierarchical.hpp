#pragma once

#include <map>
#include <string>

#include <Eigen/Dense>

#include "poststrat/design_matrix.hpp"
#include "poststrat/errors.hpp"
#include "poststrat/weights.hpp"

namespace poststrat {

/// Residual sd σ_y and one sd per batch of varying coefficients.
/// σ_b = 0 pools the batch completely; σ_b = +∞ leaves it unpenalized.
struct VarianceComponents {
  double sigma_y = 1.0;
  std::map<std::string, double> sigma_batch;

  /// Exchangeable normal model for the cells: one batch with sd σ_θ.
  static VarianceComponents exchangeable(double sigma_y, double sigma_theta,
                                         std::string batch = "cells");
  /// σ_θ of a single-batch model. Throws ConfigError otherwise.
  double sigma_theta() const;
  void validate() const;
};

// --- general hierarchical regression --------------------------------------

/// β̂ = (XᵀΣ_y⁻¹X + Σ_β⁻¹)⁻¹ XᵀΣ_y⁻¹ y with Σ_y = σ_y² I. Columns of a batch
/// with σ_b = 0 get β = 0 exactly.
Eigen::VectorXd gls_ridge_fit(const DesignMatrices& matrices, const Eigen::VectorXd& y,
                              const VarianceComponents& vc);

/// Implied unit and cell weights of the Bayes poststratified estimate.
/// Normalized to n when the constant is unpenalized.
WeightVector bayes_implied_weights(const DesignMatrices& matrices, const VarianceComponents& vc);

/// log p(y | σ) with the batch coefficients integrated out and the
/// unpenalized coefficients at their GLS estimate.
double log_marginal_likelihood(const DesignMatrices& matrices, const Eigen::VectorXd& y,
                               const VarianceComponents& vc);

struct VarianceFitOptions {
  double tolerance = 1e-8;        // per 1-D search, on the log-σ scale
  int max_evaluations = 500;      // per 1-D search
  double cycle_tolerance = 1e-6;  // max |Δ log σ| over one coordinate cycle
  int max_cycles = 200;
};

class VarianceFitError : public NumericalError {
 public:
  VarianceFitError(const std::string& message, VarianceComponents best)
      : NumericalError(message), best_(std::move(best)) {}
  const VarianceComponents& best() const { return best_; }

 private:
  VarianceComponents best_;
};

/// Empirical Bayes: maximizes log_marginal_likelihood by coordinate cycles of
/// bounded 1-D searches on log σ. Deterministic for given inputs.
VarianceComponents fit_variance_components(const DesignMatrices& matrices, const Eigen::VectorXd& y,
                                           const VarianceFitOptions& options = {});

// --- exchangeable normal model -------------------------------------------

struct ExchangeablePosterior {
  Eigen::VectorXd theta;  // posterior mean per cell
  double mu = 0.0;        // posterior mean of the common mean (flat prior)
};

/// Posterior cell means given cell sample means `ybar` (entries for empty
/// cells are ignored; those cells get θ̂ = μ̂).
ExchangeablePosterior exch_normal_posterior(const Eigen::VectorXd& ybar, const PoststratTable& table,
                                            const VarianceComponents& vc);

/// J×J matrix c with θ̂_k = Σ_j c_kj ȳ_j, from the A_k = 1/(σ_y²/n_k + σ_θ²),
/// A = Σ_k A_k closed form.
Eigen::MatrixXd posterior_mean_coefficients(const PoststratTable& table, const VarianceComponents& vc);

struct ShrinkageWeights {
  Eigen::VectorXd exact;        // w_j^POP
  Eigen::VectorXd approximate;  // shrink·(full poststrat) + (1 − shrink)·1
  Eigen::VectorXd shrink;       // n_jσ_θ² / (σ_y² + n_jσ_θ²)
};

/// Closed-form implied unit weights per cell. Every cell needs n_j ≥ 1.
ShrinkageWeights exch_normal_weights(const PoststratTable& table, const VarianceComponents& vc);
Eigen::VectorXd approx_shrinkage_weights(const PoststratTable& table, const VarianceComponents& vc);

}  // namespace poststrat
