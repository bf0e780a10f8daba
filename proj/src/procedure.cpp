#include "poststrat/procedure.hpp"

#include <algorithm>
#include <map>

#include "poststrat/classical.hpp"

namespace poststrat {

Estimand weighted_mean_estimand(std::string outcome) {
  return [outcome = std::move(outcome)](const SurveyDataset& dataset, const WeightVector& w) {
    const Eigen::VectorXd y = outcome_vector(dataset, outcome);
    if (!y.allFinite()) throw DataError("outcome '" + outcome + "' has missing values; use complete cases");
    return weighted_mean(y, w);
  };
}

PopulationCounts collapse_population(const PopulationCounts& counts, const std::vector<std::string>& factor_names) {
  std::vector<std::size_t> pick;
  for (const auto& name : factor_names) {
    const auto it = std::find(counts.factor_names.begin(), counts.factor_names.end(), name);
    if (it == counts.factor_names.end()) {
      throw DataError("population counts have no column for factor '" + name + "'");
    }
    pick.push_back(static_cast<std::size_t>(it - counts.factor_names.begin()));
  }
  if (pick.size() == counts.factor_names.size()) return counts;

  PopulationCounts out;
  out.factor_names = factor_names;
  std::map<std::vector<std::string>, std::size_t> row_of;
  for (std::size_t r = 0; r < counts.keys.size(); ++r) {
    std::vector<std::string> key;
    for (std::size_t k : pick) key.push_back(counts.keys[r][k]);
    const auto [it, inserted] = row_of.emplace(key, out.keys.size());
    if (inserted) {
      out.keys.push_back(std::move(key));
      out.counts.push_back(0.0);
    }
    out.counts[it->second] += counts.counts[r];
  }
  return out;
}

CellAssignment poststrat_cells(const SurveyDataset& dataset, const std::vector<std::string>& factor_names,
                               const PopulationCounts& population) {
  CellAssignment cells = assign_cells(dataset, factor_names);
  cells.table = attach_population(cells.table, collapse_population(population, factor_names));
  return cells;
}

WeightingProcedure unit_procedure() {
  return {"unit", {}, [](const SurveyDataset& d) { return unit_weights(d.size()); }};
}

WeightingProcedure given_procedure() {
  return {"given", {}, [](const SurveyDataset& d) { return given_weights(d); }};
}

WeightingProcedure full_poststrat_procedure(std::vector<std::string> factors, PopulationCounts population) {
  auto cell_factors = factors;
  return {"full_poststrat", std::move(cell_factors),
          [factors = std::move(factors), population = std::move(population)](const SurveyDataset& d) {
            return full_poststrat_weights(poststrat_cells(d, factors, population));
          }};
}

namespace {

std::vector<std::string> model_cells(const DesignSpec& spec, std::vector<std::string> cells) {
  spec.validate();
  if (cells.empty()) return spec.factor_names();
  for (const auto& f : spec.factor_names()) {
    if (std::find(cells.begin(), cells.end(), f) == cells.end()) {
      throw ConfigError("model factor '" + f + "' is missing from the poststratification cells");
    }
  }
  return cells;
}

}  // namespace

WeightingProcedure classical_procedure(DesignSpec spec, PopulationCounts population, std::vector<std::string> cells) {
  auto factors = model_cells(spec, std::move(cells));
  return {"classical", factors,
          [spec = std::move(spec), factors, population = std::move(population)](const SurveyDataset& d) {
            return classical_implied_weights(build_design(spec, poststrat_cells(d, factors, population)));
          }};
}

WeightingProcedure hierarchical_procedure(DesignSpec spec, PopulationCounts population, std::string outcome,
                                          std::optional<VarianceComponents> fixed, std::vector<std::string> cells) {
  auto factors = model_cells(spec, std::move(cells));
  return {"hierarchical", factors,
          [spec = std::move(spec), factors, population = std::move(population), outcome = std::move(outcome),
           fixed = std::move(fixed)](const SurveyDataset& d) {
            const auto matrices = build_design(spec, poststrat_cells(d, factors, population));
            if (fixed) return bayes_implied_weights(matrices, *fixed);
            const Eigen::VectorXd y = outcome_vector(d, outcome);
            return bayes_implied_weights(matrices, fit_variance_components(matrices, y));
          }};
}

WeightingProcedure raking_procedure(std::vector<std::string> factors, std::vector<MarginSpec> margins,
                                    bool from_given) {
  auto cell_factors = factors;
  return {"raking", std::move(cell_factors),
          [factors = std::move(factors), margins = std::move(margins), from_given](const SurveyDataset& d) {
            const WeightVector initial = from_given ? given_weights(d) : unit_weights(d.size());
            return rake_weights(assign_cells(d, factors), margins, initial);
          }};
}

WeightingProcedure factor_rules_procedure(std::vector<FactorWeightRule> rules) {
  return {"factor_rules", {}, [rules = std::move(rules)](const SurveyDataset& d) { return factor_weights(d, rules); }};
}

}  // namespace poststrat
