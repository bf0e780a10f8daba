#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "poststrat/design_matrix.hpp"
#include "poststrat/hierarchical.hpp"
#include "poststrat/raking.hpp"
#include "poststrat/survey_data.hpp"
#include "poststrat/weights.hpp"

namespace poststrat {

/// A deterministic weight construction that can be replayed on any dataset
/// with the same factor columns (e.g. jackknife replicates).
struct WeightingProcedure {
  std::string name;
  /// Factors whose cells the construction uses; empty when it uses none.
  std::vector<std::string> cell_factors;
  std::function<WeightVector(const SurveyDataset&)> build;

  WeightVector operator()(const SurveyDataset& dataset) const { return build(dataset); }
};

/// Scalar estimate computed from a dataset and its weights.
using Estimand = std::function<double(const SurveyDataset&, const WeightVector&)>;

/// Σ w_i y_i / Σ w_i for one outcome (missing responses are an error).
Estimand weighted_mean_estimand(std::string outcome);

/// Sums population counts over the factors not in `factor_names`.
PopulationCounts collapse_population(const PopulationCounts& counts, const std::vector<std::string>& factor_names);

/// Cells of `factor_names` with population counts attached (collapsed as needed).
CellAssignment poststrat_cells(const SurveyDataset& dataset, const std::vector<std::string>& factor_names,
                               const PopulationCounts& population);

WeightingProcedure unit_procedure();
WeightingProcedure given_procedure();
WeightingProcedure full_poststrat_procedure(std::vector<std::string> factors, PopulationCounts population);
/// `cells` is the poststratification grid (default: the factors of `spec`);
/// it must contain every factor used by the model.
WeightingProcedure classical_procedure(DesignSpec spec, PopulationCounts population,
                                       std::vector<std::string> cells = {});
/// With `fixed` unset the variance components are refit to `outcome` on
/// every call.
WeightingProcedure hierarchical_procedure(DesignSpec spec, PopulationCounts population, std::string outcome,
                                          std::optional<VarianceComponents> fixed = std::nullopt,
                                          std::vector<std::string> cells = {});
/// Rakes unit weights (or the dataset's own weights when `from_given`).
WeightingProcedure raking_procedure(std::vector<std::string> factors, std::vector<MarginSpec> margins,
                                    bool from_given = false);
WeightingProcedure factor_rules_procedure(std::vector<FactorWeightRule> rules);

}  // namespace poststrat
