#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "poststrat/survey_data.hpp"

namespace poststrat {

/// classical: baseline level omitted, coefficients unpenalized.
/// batch: every indicator kept, coefficients share one variance component.
enum class Coding { classical, batch };

const char* coding_name(Coding coding);
Coding parse_coding(std::string_view text);

/// A main effect (one factor) or an interaction (two or more factors).
struct DesignTerm {
  std::vector<std::string> factors;
  Coding coding = Coding::classical;

  /// "age" or "age:edu"
  std::string name() const;
  static DesignTerm parse(std::string_view text, Coding coding);
};

/// Ordered list of terms. The constant term is implicit and always first.
struct DesignSpec {
  std::vector<DesignTerm> terms;

  /// Throws ConfigError on duplicate terms (as factor sets) or a factor named twice in one term.
  void validate() const;
  std::vector<std::string> factor_names() const;
  bool has_batches() const;
};

/// Every main effect and interaction of `factors` under one coding: with
/// classical coding this is the saturated cell-means design.
DesignSpec full_factorial(const std::vector<std::string>& factors, Coding coding);
/// Constant plus a single batch term over all `factors`: the exchangeable
/// normal model for the cells.
DesignSpec cell_batch_design(const std::vector<std::string>& factors);

struct DesignMatrices {
  Eigen::MatrixXd X;      // n × k
  Eigen::MatrixXd X_pop;  // J × k
  Eigen::VectorXd N_pop;  // length J; empty when no population attached
  Eigen::VectorXd n_cell; // sample count per cell
  std::vector<std::size_t> cell_of;

  std::vector<std::string> column_names;
  std::vector<std::string> column_terms;
  std::vector<int> column_batch;  // -1 for unpenalized columns
  std::vector<std::string> batch_names;

  Eigen::Index columns() const { return X_pop.cols(); }
  Eigen::Index rows() const { return X.rows(); }
  Eigen::Index cells() const { return X_pop.rows(); }
  bool has_population() const { return N_pop.size() > 0; }
  double population_total() const { return N_pop.sum(); }
  /// Column 0 is identically one in both X and X_pop and unpenalized.
  bool has_intercept() const;
};

/// Population-side rows only (no sample). Column layout identical to build_design.
DesignMatrices population_design(const DesignSpec& spec, const CellGrid& grid);

/// Builds X, X_pop and the batch map. Throws ConfigError for unknown factors
/// and NumericalError naming the first classical term that makes the
/// unpenalized columns of X rank deficient.
DesignMatrices build_design(const DesignSpec& spec, const CellAssignment& cells);

/// Σ_j N_j X_pop[j,·] / N, one entry per column (the constant's entry is 1).
Eigen::VectorXd design_column_means(const DesignSpec& spec, const PoststratTable& table);

/// Diagonal prior precision Σ_β⁻¹: 0 for unpenalized columns, σ_b⁻² for batch b.
/// σ = +∞ gives 0. Throws ConfigError for a missing batch σ or σ ≤ 0.
Eigen::DiagonalMatrix<double, Eigen::Dynamic> prior_precision(
    const DesignMatrices& matrices, const std::map<std::string, double>& sigmas);

}  // namespace poststrat
