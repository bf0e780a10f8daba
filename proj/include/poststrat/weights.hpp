#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "poststrat/survey_data.hpp"

namespace poststrat {

enum class Normalization { sum_to_n, unnormalized };

/// Which construction produced a weight vector. Flat-prior (projection)
/// sources satisfy the population form of the model-based variance identity.
enum class WeightSource {
  unit,
  given,
  full_poststrat,
  classical_regression,
  hierarchical_regression,
  raking,
  factor_rules,
};

const char* weight_source_name(WeightSource source);
bool is_projection_source(WeightSource source);

struct WeightVector {
  Eigen::VectorXd unit;  // w_i, length n
  Eigen::VectorXd cell;  // w_j^POP, length J; empty when not cell-structured
  Normalization normalization = Normalization::unnormalized;
  WeightSource source = WeightSource::given;

  Eigen::Index size() const { return unit.size(); }
  /// W_j = n_j w_j^POP
  Eigen::VectorXd cell_totals(const Eigen::VectorXd& n_cell) const;
};

/// All-ones unit weights (the "no weighting" case).
WeightVector unit_weights(std::size_t n);

/// Rescales unit (and cell) weights so Σ_i w_i = n. Throws DataError if Σw = 0.
WeightVector normalized_to_n(WeightVector w);

/// Weights read from the dataset's `weight` column.
WeightVector given_weights(const SurveyDataset& dataset);

enum class SEMethod { srs, fixed_weight, inverse_probability, model_based, jackknife_cells };

const char* se_method_name(SEMethod method);
SEMethod parse_se_method(std::string_view text);
std::vector<SEMethod> all_se_methods();

struct EstimateReport {
  std::string estimand;
  std::string model;
  double estimate = 0.0;
  std::vector<std::pair<SEMethod, double>> se;
  WeightVector weights;
};

/// Unit-weight CSV: respondent id, cell index j (1-based), w_i.
void write_unit_weights_csv(std::ostream& out, const WeightVector& w, const std::vector<std::string>& ids,
                            const std::vector<std::size_t>& cell_of);
/// Cell-weight CSV: j, factor levels, N_j, n_j, w_j^POP.
void write_cell_weights_csv(std::ostream& out, const WeightVector& w, const PoststratTable& table);

}  // namespace poststrat
