#include <cmath>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "poststrat/errors.hpp"
#include "poststrat/simulation.hpp"
#include "poststrat/variance.hpp"
#include "support/fixtures.hpp"

using namespace poststrat;
using fixture::factor;

namespace {

PopulationSpec sex_population(std::vector<double> mean, std::size_t size = 100000) {
  PopulationSpec s;
  s.factors = {factor("sex", {"F", "M"})};
  s.proportions = {0.5, 0.5};
  s.outcome.mean = std::move(mean);
  s.outcome.sd = {1.0, 1.0};
  s.size = size;
  return s;
}

SamplingDesign cell_design(std::vector<double> propensity, double n) {
  SamplingDesign d;
  d.propensity = std::move(propensity);
  d.target_size = n;
  return d;
}

std::size_t count_level(const SurveyDataset& d, std::size_t factor_index, std::size_t level) {
  const auto codes = d.levels(factor_index);
  return static_cast<std::size_t>(std::count(codes.begin(), codes.end(), level));
}

double se_of(const CalibrationRow& row, const std::string& label) {
  const auto it = std::find(row.se_labels.begin(), row.se_labels.end(), label);
  return row.mean_se.at(static_cast<std::size_t>(it - row.se_labels.begin()));
}

}  // namespace

TEST(Population, SingleCell) {
  PopulationSpec s;
  s.factors = {factor("all", {"everyone"})};
  s.proportions = {1.0};
  s.outcome.mean = {2.0};
  s.outcome.sd = {0.0};
  s.size = 500;
  const auto pop = generate_population(s, 1);
  EXPECT_EQ(pop.size(), 500u);
  for (auto j : pop.cell_of) EXPECT_EQ(j, 0u);
  EXPECT_DOUBLE_EQ(pop.mean(), 2.0);
  EXPECT_TRUE(pop.warnings.empty());
}

TEST(Population, EqualCellsSplitWithinFiveSigma) {
  const auto pop = generate_population(sex_population({0, 0}), 3);
  const double sigma = std::sqrt(100000 * 0.25);
  EXPECT_LT(std::abs(pop.counts[0][0] - 50000.0), 5.0 * sigma);
  EXPECT_LT(std::abs(pop.counts[0][0] - 50000.0), 1000.0);
  EXPECT_DOUBLE_EQ(pop.counts[0][0] + pop.counts[0][1], 100000.0);
}

TEST(Population, DeterministicGivenSeed) {
  const auto a = generate_population(sex_population({0, 1}, 2000), 11);
  const auto b = generate_population(sex_population({0, 1}, 2000), 11);
  const auto c = generate_population(sex_population({0, 1}, 2000), 12);
  EXPECT_EQ(a.cell_of, b.cell_of);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NE(a.y, c.y);
}

TEST(Population, TwoWavesWithShiftAndInteraction) {
  auto s = sex_population({1, 2}, 50000);
  s.two_waves = true;
  s.wave1_proportions = std::vector<double>{0.3, 0.7};
  s.outcome.wave_shift = 0.5;
  s.outcome.wave_interaction = {0.0, 1.0};
  s.outcome.sd = {0.0, 0.0};
  const auto pop = generate_population(s, 4);
  EXPECT_DOUBLE_EQ(s.outcome.cell_mean(1, 1), 3.5);
  EXPECT_EQ(pop.size(), 100000u);
  const double share1 = pop.counts[1][1] / 50000.0;
  EXPECT_NEAR(pop.mean(1), 1.5 * (1 - share1) + 3.5 * share1, 1e-12);
  EXPECT_NEAR(share1, 0.7, 5.0 * std::sqrt(0.21 / 50000));
}

TEST(Population, SmallSizeWarnsOnEmptyCell) {
  PopulationSpec s;
  s.factors = {fixture::numbered_factor("c", 3)};
  s.proportions = {0.998, 0.001, 0.001};
  s.outcome.mean = {0, 0, 0};
  s.outcome.sd = {1, 1, 1};
  s.size = 5;
  const auto pop = generate_population(s, 1);
  EXPECT_FALSE(pop.warnings.empty());
}

TEST(Population, ValidationErrors) {
  auto s = sex_population({0, 0});
  s.proportions = {0.6, 0.6};
  EXPECT_THROW(generate_population(s, 1), ConfigError);
  s = sex_population({0, 0});
  s.outcome.sd = {-1, 1};
  EXPECT_THROW(generate_population(s, 1), ConfigError);
  s = sex_population({0.2, 1.5});
  s.outcome.family = OutcomeFamily::bernoulli;
  EXPECT_THROW(generate_population(s, 1), ConfigError);
}

TEST(Sampling, InclusionProbabilitiesHitTarget) {
  const auto pop = generate_population(sex_population({0, 0}), 5);
  SamplingDesign d = cell_design({0.5, 1.0}, 3000);
  d.response = {0.8, 0.4};
  const auto pi = inclusion_probabilities(pop, d);
  EXPECT_NEAR(pi[0][0] * pop.counts[0][0] + pi[0][1] * pop.counts[0][1], 3000.0, 1e-9);
  EXPECT_NEAR(pi[0][0], pi[0][1], 1e-15);  // 0.5·0.8 == 1.0·0.4
  const auto sample = draw_sample(pop, d, 9);
  for (double w : sample.weights()) EXPECT_NEAR(w, 1.0 / pi[0][0], 1e-9);
}

TEST(Sampling, PropensityRatioShowsInSampleRatio) {
  const auto pop = generate_population(sex_population({0, 0}), 6);
  const auto sample = draw_sample(pop, cell_design({0.5, 1.0}, 20000), 7);
  const double nf = static_cast<double>(count_level(sample, 0, 0));
  const double nm = static_cast<double>(count_level(sample, 0, 1));
  const double log_ratio = std::log((nm / pop.counts[0][1]) / (nf / pop.counts[0][0]));
  EXPECT_LT(std::abs(log_ratio - std::log(2.0)), 5.0 * std::sqrt(1.0 / nm + 1.0 / nf));
}

TEST(Sampling, LargeHouseholdsOverrepresented) {
  PopulationSpec s;
  s.factors = {factor("adults", {"1", "2", "3+"})};
  s.proportions = {0.3, 0.5, 0.2};
  s.outcome.mean = {0, 0, 0};
  s.outcome.sd = {1, 1, 1};
  const auto pop = generate_population(s, 8);
  SamplingDesign d;
  d.logistic = LogisticPropensity{-3.0, {{"adults", {{"1", 0.0}, {"2", 0.69}, {"3+", 1.1}}}}};
  d.target_size = 5000;
  const auto sample = draw_sample(pop, d, 8);
  const double n = static_cast<double>(sample.size());
  const double share_large = static_cast<double>(count_level(sample, 0, 2)) / n;
  const double pop_large = pop.counts[0][2] / static_cast<double>(pop.size());
  EXPECT_GT(share_large - pop_large, 5.0 * std::sqrt(pop_large * (1 - pop_large) / n));
}

TEST(Sampling, DesignErrors) {
  const auto pop = generate_population(sex_population({0, 0}, 1000), 1);
  EXPECT_THROW(draw_sample(pop, cell_design({0.5, 0.5}, 0.0), 1), DataError);
  EXPECT_THROW(draw_sample(pop, cell_design({0.0, 0.5}, 10.0), 1), ConfigError);
  EXPECT_THROW(draw_sample(pop, cell_design({0.5}, 10.0), 1), ConfigError);
}

TEST(Evaluate, SelfWeightingSampleMean) {
  const auto pop = generate_population(sex_population({0, 0}), 21);
  const auto est = weighted_mean_estimator("mean", unit_procedure(), "y", pop.mean(), {SEMethod::srs});
  const auto t = evaluate_estimators(pop, cell_design({1, 1}, 200), {est}, {1000, 5, 4});
  const auto& r = t.row("mean");
  EXPECT_EQ(r.reps, 1000u);
  EXPECT_LT(std::abs(r.bias), 3.0 * r.bias_mcse);
  const double ratio = se_of(r, "srs") / r.true_se;
  EXPECT_GE(ratio, 0.9);
  EXPECT_LE(ratio, 1.1);
}

TEST(Evaluate, PoststratificationRemovesSexConfound) {
  const auto pop = generate_population(sex_population({0, 1}), 22);
  const auto counts = pop.population_counts();
  const auto raw = weighted_mean_estimator("raw", unit_procedure(), "y", pop.mean(), {SEMethod::srs});
  const auto ps =
      weighted_mean_estimator("ps", full_poststrat_procedure({"sex"}, counts), "y", pop.mean(), {SEMethod::srs});
  const auto t = evaluate_estimators(pop, cell_design({0.5, 1}, 300), {raw, ps}, {600, 6, 4});
  ASSERT_EQ(t.row("ps").failures, 0u) << t.row("ps").first_error;
  EXPECT_GT(std::abs(t.row("raw").bias), 3.0 * t.row("raw").bias_mcse);
  EXPECT_LT(std::abs(t.row("ps").bias), 3.0 * t.row("ps").bias_mcse);
}

TEST(Evaluate, IgnoringWeightsUnderstatesUncertainty) {
  const auto pop = generate_population(sex_population({0, 0}), 23);
  const auto ps = weighted_mean_estimator("ps", full_poststrat_procedure({"sex"}, pop.population_counts()), "y",
                                          pop.mean(), {SEMethod::srs, SEMethod::model_based}, pop.population_counts());
  const auto t = evaluate_estimators(pop, cell_design({1.0 / 6.0, 1}, 300), {ps}, {800, 7, 4});
  const auto& r = t.row("ps");
  EXPECT_LT(se_of(r, "srs"), r.true_se - 3.0 * r.true_se_mcse);
  EXPECT_NEAR(se_of(r, "model_based") / r.true_se, 1.0, 0.1);
}

TEST(Evaluate, NonresponseFoldsIntoPropensity) {
  const auto pop = generate_population(sex_population({0, 1}, 20000), 24);
  SamplingDesign split = cell_design({0.5, 1.0}, 400);
  split.response = {0.6, 0.9};
  const SamplingDesign direct = cell_design({0.3, 0.9}, 400);
  const auto est = weighted_mean_estimator("w", given_procedure(), "y", pop.mean(),
                                           {SEMethod::srs, SEMethod::inverse_probability});
  const auto a = evaluate_estimators(pop, split, {est}, {50, 8, 2});
  const auto b = evaluate_estimators(pop, direct, {est}, {50, 8, 2});
  std::ostringstream sa, sb;
  write_calibration_csv(sa, a);
  write_calibration_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
}

TEST(Evaluate, DeterministicAcrossThreadCounts) {
  const auto pop = generate_population(sex_population({0, 1}, 20000), 25);
  const auto est = weighted_mean_estimator("w", given_procedure(), "y", pop.mean(), {SEMethod::fixed_weight});
  const auto a = evaluate_estimators(pop, cell_design({1.0 / 3.0, 1}, 200), {est}, {40, 9, 1});
  const auto b = evaluate_estimators(pop, cell_design({1.0 / 3.0, 1}, 200), {est}, {40, 9, 6});
  std::ostringstream sa, sb;
  write_calibration_csv(sa, a);
  write_calibration_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(replicate_rng(9, 3)(), replicate_rng(9, 3)());
  EXPECT_NE(replicate_rng(9, 3)(), replicate_rng(9, 4)());
}

TEST(Evaluate, FailuresRecordedAndExcluded) {
  const auto pop = generate_population(sex_population({0, 1}, 5000), 26);
  NamedEstimator odd{"odd", 0.0, [](const SurveyDataset& d) -> EstimatorOutput {
                       if (d.size() % 2 == 1) throw DataError("odd sample");
                       return {1.0, {}};
                     }};
  const auto t = evaluate_estimators(pop, cell_design({1, 1}, 100), {odd}, {60, 10, 2});
  const auto& r = t.row("odd");
  EXPECT_EQ(r.reps + r.failures, 60u);
  EXPECT_GT(r.failures, 0u);
  EXPECT_EQ(r.first_error, "odd sample");
  EXPECT_DOUBLE_EQ(r.mean, 1.0);
  EXPECT_THROW(t.row("missing"), ConfigError);
}

TEST(Evaluate, NeedsTwoReplicates) {
  const auto pop = generate_population(sex_population({0, 0}, 1000), 27);
  const auto est = weighted_mean_estimator("m", unit_procedure(), "y", 0.0, {});
  EXPECT_THROW(evaluate_estimators(pop, cell_design({1, 1}, 50), {est}, {1, 1, 1}), ConfigError);
  EXPECT_THROW(weighted_mean_estimator("m", unit_procedure(), "y", 0.0, {SEMethod::model_based}), ConfigError);
}

TEST(Evaluate, CalibrationCsvMarksMissingLabels) {
  const auto pop = generate_population(sex_population({0, 1}, 5000), 28);
  const auto a = weighted_mean_estimator("a", given_procedure(), "y", pop.mean(), {SEMethod::srs});
  const auto b = weighted_mean_estimator("b", given_procedure(), "y", pop.mean(), {SEMethod::fixed_weight});
  std::ostringstream out;
  write_calibration_csv(out, evaluate_estimators(pop, cell_design({1, 1}, 100), {a, b}, {10, 2, 1}));
  const std::string s = out.str();
  EXPECT_NE(s.find("NA"), std::string::npos);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
}
