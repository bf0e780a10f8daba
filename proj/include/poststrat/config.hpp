#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "poststrat/design_matrix.hpp"
#include "poststrat/hierarchical.hpp"
#include "poststrat/raking.hpp"
#include "poststrat/simulation.hpp"
#include "poststrat/survey_data.hpp"
#include "poststrat/weights.hpp"

namespace poststrat {

/// Survey layout and model description read from a JSON design file:
///
///   {"factors":  [{"name": "sex", "levels": ["F", "M"], "baseline": "F"}, ...],
///    "outcomes": ["y"],
///    "terms":    [{"term": "sex", "coding": "classical"}, {"term": "sex:age", "coding": "batch"}],
///    "sigma":    {"sigma_y": 1.0, "batches": {"sex:age": 0.5}},
///    "rules":    [{"factor": "phone", "multipliers": {"one": 1, "two+": 0.5}}]}
///
/// `levels`, `terms`, `sigma` and `rules` are optional.
struct DesignConfig {
  SurveySchema schema;
  DesignSpec spec;
  std::optional<VarianceComponents> sigma;
  std::vector<FactorWeightRule> rules;
  std::string source;  // canonical JSON echo

  /// Factors of the model terms, or every schema factor when there are no terms
  /// and `all_when_empty` is set.
  std::vector<std::string> cell_factors(bool all_when_empty) const;
};

DesignConfig parse_design_config(std::string_view json_text);
DesignConfig read_design_config_file(const std::string& path);

/// One estimator of a simulation scenario.
struct EstimatorConfig {
  std::string name;
  std::string type;     // mean | weighted_diff | regression_trend | interaction_trend
  std::string weights;  // unit | given | full_poststrat | classical | hierarchical
  std::vector<std::string> cells;
  DesignSpec spec;
  std::optional<VarianceComponents> sigma;
  std::vector<SEMethod> se_methods;
  TrendScale scale = TrendScale::linear;
};

/// Simulation scenario read from JSON:
///
///   {"population": {"factors": [...], "proportions": [...], "wave1_proportions": [...],
///                   "size": 100000, "two_waves": false,
///                   "outcome": {"name": "y", "family": "normal", "mean": [...], "sd": [...],
///                               "wave_shift": 0, "wave_interaction": [...]}},
///    "design": {"propensity": [...], "logistic": {"intercept": 0, "effects": {"sex": {"M": 0.7}}},
///               "response": [...], "target_size": 500},
///    "estimators": [{"name": "ps", "type": "mean", "weights": "full_poststrat", "cells": ["sex"],
///                    "se": ["srs", "jackknife_cells"]}, ...],
///    "reps": 1000}
struct Scenario {
  PopulationSpec population;
  SamplingDesign design;
  std::vector<EstimatorConfig> estimators;
  std::size_t reps = 1000;
  std::string source;
};

Scenario parse_scenario(std::string_view json_text);
Scenario read_scenario_file(const std::string& path);

/// Estimators bound to a generated population (truths and population means
/// are taken from it).
std::vector<NamedEstimator> build_estimators(const Scenario& scenario, const Population& population);

/// The weighting procedure named by `weights` over the given cells/design.
WeightingProcedure make_procedure(const std::string& weights, const std::vector<std::string>& cells,
                                  const DesignSpec& spec, const std::optional<PopulationCounts>& population,
                                  const std::string& outcome, const std::optional<VarianceComponents>& sigma,
                                  const std::vector<FactorWeightRule>& rules = {});

}  // namespace poststrat
