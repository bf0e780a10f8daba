#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "poststrat/design_matrix.hpp"
#include "poststrat/procedure.hpp"
#include "poststrat/regression.hpp"
#include "poststrat/survey_data.hpp"
#include "poststrat/weights.hpp"

namespace poststrat {

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

enum class TrendScale { linear, logit };

struct WaveSEOptions {
  /// srs, fixed_weight, inverse_probability or jackknife_cells.
  SEMethod method = SEMethod::inverse_probability;
  /// Weight construction replayed by the jackknife (default: the given weights).
  std::optional<WeightingProcedure> procedure;
  unsigned threads = 1;
};

/// Weighted mean of one wave with its SE, using the wave's own weights.
Estimate weighted_wave_mean(const SurveyDataset& wave, const std::string& outcome, const WaveSEOptions& options = {});

struct WeightedDiff {
  Estimate wave0;
  Estimate wave1;
  Estimate change;                 // ȳ_w¹ − ȳ_w⁰
  std::optional<Estimate> logit;   // logit(ȳ_w¹) − logit(ȳ_w⁰), delta-method SE
};

/// Difference of weighted means. Both waves need weights.
WeightedDiff weighted_diff(const SurveyDataset& wave0, const SurveyDataset& wave1, const std::string& outcome,
                           const WaveSEOptions& options = {});

struct RegressionTrend {
  Estimate time;  // coefficient on the wave indicator z
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;
  std::vector<std::string> column_names;
};

/// Unweighted regression of y on [1, z, X] with X from `spec`
/// (classical coding only). Linear: OLS; logit: IRLS.
RegressionTrend regression_trend(const SurveyDataset& combined, const std::string& outcome, const DesignSpec& spec,
                                 TrendScale scale, CovarianceType covariance = CovarianceType::conventional);

/// [1, z, X, (X∘z)] for the complete cases of `outcome`, and its column names.
struct TrendDesign {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> column_names;
  Eigen::Index adjustment_columns = 0;  // columns of X excluding constant and z
};
TrendDesign trend_design(const SurveyDataset& combined, const std::string& outcome, const DesignSpec& spec,
                         bool interactions);

struct InteractionTrend {
  Estimate estimand;  // β1 + β2·(X̄¹ − X̄⁰) + β3·X̄¹
  RegressionTrend fit;
  Eigen::VectorXd main_effects;  // β2
  Eigen::VectorXd interactions;  // β3 (empty without interactions)
};

/// Linear fit with or without X×z interactions, combined with the supplied
/// population means of the adjustment columns per wave (constant excluded).
InteractionTrend interaction_trend(const SurveyDataset& combined, const std::string& outcome, const DesignSpec& spec,
                                   const Eigen::VectorXd& xbar0, const Eigen::VectorXd& xbar1, bool interactions = true,
                                   CovarianceType covariance = CovarianceType::conventional);

/// Per-column population means of the adjustment columns (constant dropped).
Eigen::VectorXd adjustment_means(const DesignSpec& spec, const PoststratTable& table);

// --- interaction averaging --------------------------------------------------

struct InteractionCoefficients {
  double b0 = 0.0;  // intercept
  double b1 = 0.0;  // z
  double b2 = 0.0;  // group
  double b3 = 0.0;  // z × group
};

/// E(y|z) = b0 + b1 z + b2 p + b3 z p with p = E(group|z) ∈ [0, 1].
double interaction_average(const InteractionCoefficients& b, double z, double p);
/// E(y|z1) − E(y|z0).
double population_difference(const InteractionCoefficients& b, double z1, double p1, double z0, double p0);

/// z | group ~ N(mean_g, sd²) with a common sd; E(group|z) by Bayes' rule
/// from the group share in the population.
struct GroupConditionalNormal {
  double mean0 = 0.0;
  double mean1 = 0.0;
  double sd = 1.0;
  double share1 = 0.5;

  /// Group means and pooled sd from data; `share1` defaults to the sample share.
  static GroupConditionalNormal fit(const Eigen::VectorXd& z, const Eigen::VectorXd& group,
                                    std::optional<double> share1 = std::nullopt);
  double probability(double z) const;
};

// --- reports ----------------------------------------------------------------

struct TrendReport {
  std::string outcome;
  bool binary = false;
  WeightedDiff weighted;
  Estimate regression;
  std::optional<Estimate> regression_logit;
  std::optional<Estimate> interaction;
};

struct TrendOptions {
  DesignSpec spec;
  WaveSEOptions se;
  CovarianceType covariance = CovarianceType::conventional;
  /// When set, the interaction-adjusted estimand is added.
  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> wave_means;
};

/// Weighted difference and regression trend on both scales for one outcome of a two-wave dataset.
TrendReport compare_trend(const SurveyDataset& combined, const std::string& outcome, const TrendOptions& options);

void write_trend_csv(std::ostream& out, const std::vector<TrendReport>& reports);
/// Aligned text, SEs in parentheses; binary outcomes shown in percent.
void write_trend_text(std::ostream& out, const std::vector<TrendReport>& reports);

}  // namespace poststrat
