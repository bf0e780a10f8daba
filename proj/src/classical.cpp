#include "poststrat/classical.hpp"

#include <cmath>
#include <limits>

#include "poststrat/errors.hpp"
#include "poststrat/least_squares.hpp"

namespace poststrat {

Eigen::VectorXd outcome_vector(const SurveyDataset& dataset, std::string_view outcome) {
  const auto& values = dataset.outcome(outcome).values;
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

double weighted_mean(const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  if (y.size() != w.size()) throw DataError("weighted mean: outcome and weights differ in length");
  const double total = w.sum();
  if (!(total > 0.0)) throw DataError("weighted mean: weights sum to zero");
  return w.dot(y) / total;
}

double weighted_mean(const Eigen::VectorXd& y, const WeightVector& w) { return weighted_mean(y, w.unit); }

double weighted_cell_mean(const Eigen::VectorXd& cell_totals, const Eigen::VectorXd& means) {
  if (cell_totals.size() != means.size()) throw DataError("cell weights and cell means differ in length");
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index j = 0; j < means.size(); ++j) {
    if (cell_totals(j) == 0.0) continue;
    num += cell_totals(j) * means(j);
    den += cell_totals(j);
  }
  if (!(den > 0.0)) throw DataError("weighted mean: cell weights sum to zero");
  return num / den;
}

Eigen::VectorXd cell_means(const Eigen::VectorXd& y, const std::vector<std::size_t>& cell_of, std::size_t cells) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cells));
  Eigen::VectorXd count = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cells));
  for (std::size_t i = 0; i < cell_of.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(cell_of[i]);
    sum(j) += y(static_cast<Eigen::Index>(i));
    count(j) += 1.0;
  }
  Eigen::VectorXd out(static_cast<Eigen::Index>(cells));
  for (Eigen::Index j = 0; j < out.size(); ++j) {
    out(j) = count(j) > 0.0 ? sum(j) / count(j) : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

double poststratified_estimate(const Eigen::VectorXd& cell_estimates, const PoststratTable& table) {
  const auto N = table.population();
  if (static_cast<std::size_t>(cell_estimates.size()) != N.size()) {
    throw DataError("poststratified estimate: expected one estimate per cell");
  }
  double num = 0.0;
  for (std::size_t j = 0; j < N.size(); ++j) {
    if (N[j] == 0.0) continue;
    const double theta = cell_estimates(static_cast<Eigen::Index>(j));
    if (!std::isfinite(theta)) {
      throw DataError("poststratified estimate: no finite estimate for populated cell " +
                      table.grid().cell_name(j));
    }
    num += N[j] * theta;
  }
  return num / table.population_total();
}

WeightVector full_poststrat_weights(const CellAssignment& cells) {
  const PoststratTable& table = cells.table;
  const auto N = table.population();
  const auto n_j = table.sample_counts();
  const double n = static_cast<double>(table.sample_size());
  const double scale = n / table.population_total();

  WeightVector w;
  w.cell.resize(static_cast<Eigen::Index>(table.cells()));
  for (std::size_t j = 0; j < table.cells(); ++j) {
    if (n_j[j] == 0) {
      if (N[j] > 0.0) {
        throw DataError("full poststratification: cell " + table.grid().cell_name(j) +
                        " has population but no respondents; use a model-based estimator");
      }
      w.cell(static_cast<Eigen::Index>(j)) = 0.0;
      continue;
    }
    w.cell(static_cast<Eigen::Index>(j)) = N[j] / static_cast<double>(n_j[j]) * scale;
  }
  w.unit.resize(static_cast<Eigen::Index>(cells.cell_of.size()));
  for (std::size_t i = 0; i < cells.cell_of.size(); ++i) {
    w.unit(static_cast<Eigen::Index>(i)) = w.cell(static_cast<Eigen::Index>(cells.cell_of[i]));
  }
  w.normalization = Normalization::sum_to_n;
  w.source = WeightSource::full_poststrat;
  return w;
}

Eigen::VectorXd ols_fit(const DesignMatrices& matrices, const Eigen::VectorXd& y) {
  if (y.size() != matrices.rows()) throw DataError("ols: outcome length does not match the design");
  if (!y.allFinite()) throw DataError("ols: outcome has missing or non-finite values");
  return LeastSquares(matrices.X).solve(y);
}

double regression_poststratified_estimate(const DesignMatrices& matrices, const Eigen::VectorXd& beta) {
  if (!matrices.has_population()) throw DataError("population counts have not been attached");
  return matrices.N_pop.dot(matrices.X_pop * beta) / matrices.population_total();
}

WeightVector classical_implied_weights(const DesignMatrices& matrices) {
  if (!matrices.has_population()) throw DataError("population counts have not been attached");
  if (!matrices.has_intercept()) {
    throw ConfigError("implied weights require a constant term as the first design column");
  }
  const LeastSquares ls(matrices.X);
  const double n = static_cast<double>(matrices.rows());
  const Eigen::VectorXd a = matrices.X_pop.transpose() * matrices.N_pop;
  const double scale = n / matrices.population_total();

  WeightVector w;
  w.unit = scale * ls.hat_apply(a);
  w.cell = scale * (matrices.X_pop * ls.normal_solve(a));
  w.normalization = Normalization::sum_to_n;
  w.source = WeightSource::classical_regression;
  return w;
}

}  // namespace poststrat
