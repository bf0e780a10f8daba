#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "poststrat/procedure.hpp"
#include "poststrat/survey_data.hpp"
#include "poststrat/trend.hpp"
#include "poststrat/weights.hpp"

namespace poststrat {

enum class OutcomeFamily { normal, bernoulli };

/// Per-cell outcome model. In wave 1 each cell mean moves by
/// wave_shift + wave_interaction[j].
struct OutcomeModel {
  std::string name = "y";
  OutcomeFamily family = OutcomeFamily::normal;
  std::vector<double> mean;  // normal mean or Bernoulli p, per cell
  std::vector<double> sd;    // normal only, per cell
  double wave_shift = 0.0;
  std::vector<double> wave_interaction;  // empty means none

  double cell_mean(std::size_t cell, int wave) const;
};

struct PopulationSpec {
  std::vector<FactorSpec> factors;
  std::vector<double> proportions;                       // wave 0 cell shares
  std::optional<std::vector<double>> wave1_proportions;  // demographic shift
  OutcomeModel outcome;
  std::size_t size = 100000;  // units per wave
  bool two_waves = false;

  CellGrid grid() const;
  /// Throws ConfigError on malformed proportions or outcome parameters.
  void validate() const;
};

struct Population {
  CellGrid grid;
  OutcomeModel outcome;
  bool two_waves = false;
  std::vector<std::size_t> cell_of;
  std::vector<int> wave;
  std::vector<double> y;
  std::vector<std::vector<double>> counts;  // N_j per wave
  /// Units are stored grouped by wave, then cell: unit indices of cell j in
  /// wave w are offsets[w][j] .. offsets[w][j + 1].
  std::vector<std::vector<std::size_t>> offsets;
  std::vector<std::string> warnings;

  std::size_t size() const { return y.size(); }
  /// Finite-population mean of the outcome in one wave.
  double mean(int w = 0) const;
  PopulationCounts population_counts(int w = 0) const;
};

/// Deterministic given the seed. Cell counts are multinomial around the
/// proportions; cells left empty produce a warning.
Population generate_population(const PopulationSpec& spec, std::uint64_t seed);

/// logit(propensity_j) = intercept + Σ_factors effect(level).
struct LogisticPropensity {
  double intercept = 0.0;
  std::map<std::string, std::map<std::string, double>> effects;
};

/// Poisson sampling: unit i in cell j is included with probability
/// π_i = min(1, c · propensity_j · response_j), c set so the expected number
/// of respondents per wave is `target_size`.
struct SamplingDesign {
  std::vector<double> propensity;  // per cell, in (0, 1]
  std::optional<LogisticPropensity> logistic;
  std::vector<double> response;  // per cell response rates; empty means 1
  double target_size = 500.0;

  /// Combined relative propensity per cell.
  std::vector<double> cell_propensities(const CellGrid& grid) const;
  void validate(const CellGrid& grid) const;
};

/// Inclusion probabilities per cell and wave.
std::vector<std::vector<double>> inclusion_probabilities(const Population& population, const SamplingDesign& design);

/// Respondents with outcome, inverse-probability weights and waves.
SurveyDataset draw_sample(const Population& population, const SamplingDesign& design, std::mt19937_64& rng);
SurveyDataset draw_sample(const Population& population, const SamplingDesign& design, std::uint64_t seed);

// --- Monte-Carlo evaluation -------------------------------------------------

struct EstimatorOutput {
  double estimate = 0.0;
  std::vector<std::pair<std::string, double>> se;  // label (usually an SE method), value
};

struct NamedEstimator {
  std::string name;
  double truth = 0.0;
  std::function<EstimatorOutput(const SurveyDataset&)> run;
};

struct SimulationOptions {
  std::size_t reps = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct CalibrationRow {
  std::string estimator;
  double truth = 0.0;
  std::size_t reps = 0;      // successful replicates
  std::size_t failures = 0;  // replicates where the estimator threw
  std::string first_error;
  double mean = 0.0;
  double bias = 0.0;
  double bias_mcse = 0.0;
  double true_se = 0.0;       // sd of the estimates across replicates
  double true_se_mcse = 0.0;  // ≈ true_se / √(2(R − 1))
  std::vector<std::string> se_labels;
  std::vector<double> mean_se;
  std::vector<double> coverage;  // share of |estimate − truth| ≤ 1.96 SE
};

struct CalibrationTable {
  std::vector<CalibrationRow> rows;
  const CalibrationRow& row(std::string_view estimator) const;
};

/// Replicate r samples with an RNG seeded from (seed, r); estimators run on
/// the same sample. Results are reduced in replicate order.
CalibrationTable evaluate_estimators(const Population& population, const SamplingDesign& design,
                                     const std::vector<NamedEstimator>& estimators, const SimulationOptions& options);

std::mt19937_64 replicate_rng(std::uint64_t seed, std::uint64_t replicate);

/// Wide CSV: one row per estimator; mean SE and coverage per SE label (NA where
/// an estimator does not report that label), then the first replicate error.
void write_calibration_csv(std::ostream& out, const CalibrationTable& table);

// --- estimators for the harness ---------------------------------------------

/// Weighted mean with weights from `procedure`. Supported SE methods: srs,
/// fixed_weight, inverse_probability, jackknife_cells, and model_based when
/// `population` is given and the procedure has cell factors.
NamedEstimator weighted_mean_estimator(std::string name, WeightingProcedure procedure, std::string outcome,
                                       double truth, std::vector<SEMethod> se_methods,
                                       std::optional<PopulationCounts> population = std::nullopt);

/// Difference of weighted wave means.
NamedEstimator weighted_diff_estimator(std::string name, WaveSEOptions se, std::string outcome, double truth);
/// Coefficient on the wave indicator, with its regression SE.
NamedEstimator regression_trend_estimator(std::string name, DesignSpec spec, std::string outcome, double truth,
                                          TrendScale scale = TrendScale::linear);
/// Interaction-adjusted estimand β1 + β2ΔX̄ + β3X̄¹.
NamedEstimator interaction_trend_estimator(std::string name, DesignSpec spec, std::string outcome, double truth,
                                           Eigen::VectorXd xbar0, Eigen::VectorXd xbar1);

}  // namespace poststrat
