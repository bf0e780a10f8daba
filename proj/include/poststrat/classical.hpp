#pragma once

#include <string_view>

#include <Eigen/Dense>

#include "poststrat/design_matrix.hpp"
#include "poststrat/survey_data.hpp"
#include "poststrat/weights.hpp"

namespace poststrat {

/// Outcome column as a vector (NaN where missing).
Eigen::VectorXd outcome_vector(const SurveyDataset& dataset, std::string_view outcome);

/// Σ w_i y_i / Σ w_i. Throws DataError on length mismatch or Σw = 0.
double weighted_mean(const Eigen::VectorXd& y, const Eigen::VectorXd& w);
double weighted_mean(const Eigen::VectorXd& y, const WeightVector& w);
/// Cell form Σ W_j ȳ_j / Σ W_j; cells with W_j = 0 are skipped.
double weighted_cell_mean(const Eigen::VectorXd& cell_totals, const Eigen::VectorXd& cell_means);

/// Per-cell sample means (NaN for empty cells).
Eigen::VectorXd cell_means(const Eigen::VectorXd& y, const std::vector<std::size_t>& cell_of, std::size_t cells);

/// Σ N_j θ_j / Σ N_j. Cells with N_j = 0 may carry any value, including NaN.
double poststratified_estimate(const Eigen::VectorXd& cell_estimates, const PoststratTable& table);

/// w_i = (N_j(i) / n_j(i)) · (n / N). Throws DataError for a populated cell
/// with no respondents.
WeightVector full_poststrat_weights(const CellAssignment& cells);

/// β̂ = argmin ||y − Xβ||. Throws NumericalError on rank deficiency.
Eigen::VectorXd ols_fit(const DesignMatrices& matrices, const Eigen::VectorXd& y);

/// Poststratified regression estimate (1/N) Σ_j N_j X_pop[j,·] β̂.
double regression_poststratified_estimate(const DesignMatrices& matrices, const Eigen::VectorXd& beta);

/// Unit weights w = (n/N) X (XᵀX)⁻¹ X_popᵀ N_pop and cell weights
/// w_pop = (n/N) X_pop (XᵀX)⁻¹ X_popᵀ N_pop. Requires a constant column.
WeightVector classical_implied_weights(const DesignMatrices& matrices);

}  // namespace poststrat
