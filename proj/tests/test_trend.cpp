#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "poststrat/errors.hpp"
#include "poststrat/regression.hpp"
#include "poststrat/trend.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace poststrat;
using fixture::factor;

namespace {

const std::vector<FactorSpec> kSexAge{factor("sex", {"F", "M"}), factor("age", {"young", "mid", "old"})};

DesignSpec main_effects() {
  DesignSpec s;
  s.terms = {DesignTerm{{"sex"}, Coding::classical}, DesignTerm{{"age"}, Coding::classical}};
  return s;
}

struct Draw {
  std::vector<std::size_t> cell_of;
  std::vector<double> y;
  std::vector<double> w;
  std::vector<int> wave;
};

SurveyDataset as_dataset(const Draw& d, bool binary) {
  auto data = fixture::cell_dataset(kSexAge, d.cell_of, d.y, d.w, d.wave);
  if (!binary) return data;
  std::vector<OutcomeColumn> out{OutcomeColumn{"y", true, d.y}};
  std::vector<std::vector<std::size_t>> codes;
  for (std::size_t f = 0; f < kSexAge.size(); ++f) {
    const auto c = data.levels(f);
    codes.emplace_back(c.begin(), c.end());
  }
  return SurveyDataset(kSexAge, std::move(codes), std::move(out), d.w, d.wave, data.ids());
}

Draw random_draw(std::mt19937_64& rng, std::size_t n, bool binary) {
  std::uniform_int_distribution<std::size_t> cell(0, 5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> z;
  Draw d;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = cell(rng);
    const int t = i % 2 == 0 ? 0 : 1;
    const double eta = -0.3 + 0.2 * static_cast<double>(j % 3) - 0.4 * static_cast<double>(j / 3) + 0.5 * t;
    d.cell_of.push_back(j);
    d.wave.push_back(t);
    d.w.push_back(0.5 + unif(rng));
    d.y.push_back(binary ? (unif(rng) < inv_logit(eta) ? 1.0 : 0.0) : eta + z(rng));
  }
  return d;
}

}  // namespace

TEST(WeightedDiff, IdenticalWavesGiveZero) {
  std::mt19937_64 rng(1);
  Draw d = random_draw(rng, 40, true);
  Draw both = d;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    both.cell_of.push_back(d.cell_of[i]);
    both.y.push_back(d.y[i]);
    both.w.push_back(d.w[i]);
  }
  both.wave.assign(d.y.size(), 0);
  both.wave.insert(both.wave.end(), d.y.size(), 1);
  const auto data = as_dataset(both, true);
  const auto r = weighted_diff(data.wave(0), data.wave(1), "y");
  EXPECT_EQ(r.change.value, 0.0);
  ASSERT_TRUE(r.logit.has_value());
  EXPECT_EQ(r.logit->value, 0.0);
  EXPECT_NEAR(r.change.se, std::sqrt(2.0) * r.wave0.se, 1e-15);
}

TEST(WeightedDiff, LogitDeltaMethod) {
  std::mt19937_64 rng(2);
  const auto data = as_dataset(random_draw(rng, 300, true), true);
  const auto r = weighted_diff(data.wave(0), data.wave(1), "y");
  ASSERT_TRUE(r.logit.has_value());
  EXPECT_NEAR(r.logit->value, logit(r.wave1.value) - logit(r.wave0.value), 1e-14);
  const double v0 = r.wave0.se / (r.wave0.value * (1 - r.wave0.value));
  const double v1 = r.wave1.se / (r.wave1.value * (1 - r.wave1.value));
  EXPECT_NEAR(r.logit->se, std::hypot(v0, v1), 1e-14);
}

TEST(WeightedDiff, NonBinaryHasNoLogit) {
  std::mt19937_64 rng(3);
  const auto data = as_dataset(random_draw(rng, 50, false), false);
  EXPECT_FALSE(weighted_diff(data.wave(0), data.wave(1), "y").logit.has_value());
}

TEST(WeightedDiff, NeedsWeights) {
  std::mt19937_64 rng(4);
  Draw d = random_draw(rng, 20, false);
  const auto data = fixture::cell_dataset(kSexAge, d.cell_of, d.y, std::nullopt, d.wave);
  EXPECT_THROW(weighted_diff(data.wave(0), data.wave(1), "y"), DataError);
}

TEST(RegressionTrend, WithoutAdjustmentEqualsUnweightedDifference) {
  std::mt19937_64 rng(5);
  for (bool binary : {false, true}) {
    Draw d = random_draw(rng, 120, binary);
    d.w.assign(d.y.size(), 1.0);
    const auto data = as_dataset(d, binary);
    const auto a = weighted_diff(data.wave(0), data.wave(1), "y");
    const auto b = regression_trend(data, "y", DesignSpec{}, TrendScale::linear);
    EXPECT_NEAR(a.change.value, b.time.value, 1e-12);
    if (binary) {
      const auto bl = regression_trend(data, "y", DesignSpec{}, TrendScale::logit);
      ASSERT_TRUE(a.logit.has_value());
      EXPECT_NEAR(a.logit->value, bl.time.value, 1e-8);
    }
  }
}

TEST(RegressionTrend, LogitMatchesNewtonOracle) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 50; ++rep) {
    const auto data = as_dataset(random_draw(rng, 400, true), true);
    const auto td = trend_design(data, "y", main_effects(), false);
    const auto fit = regression_trend(data, "y", main_effects(), TrendScale::logit);
    const Eigen::VectorXd ref = oracle::newton_logistic(td.X, td.y);
    EXPECT_LT((fit.coef - ref).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(RegressionTrend, LinearMatchesNormalEquations) {
  std::mt19937_64 rng(7);
  const auto data = as_dataset(random_draw(rng, 200, false), false);
  const auto td = trend_design(data, "y", main_effects(), false);
  const auto fit = regression_trend(data, "y", main_effects(), TrendScale::linear);
  EXPECT_LT((fit.coef - oracle::normal_equations(td.X, td.y)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(td.column_names.front(), "(Intercept)");
  EXPECT_EQ(td.column_names[1], "z");
  EXPECT_EQ(td.X.cols(), 2 + 1 + 2);
}

TEST(RegressionTrend, SeparationNamesColumns) {
  Draw d;
  for (std::size_t i = 0; i < 40; ++i) {
    d.cell_of.push_back(i % 6);
    d.wave.push_back(static_cast<int>(i % 2));
    d.w.push_back(1.0);
    d.y.push_back(i % 2 == 1 ? 1.0 : 0.0);  // y == z
  }
  const auto data = as_dataset(d, true);
  try {
    regression_trend(data, "y", DesignSpec{}, TrendScale::logit);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("z"), std::string::npos);
  }
}

TEST(RegressionTrend, RobustCovarianceIsHC1) {
  std::mt19937_64 rng(8);
  const auto data = as_dataset(random_draw(rng, 150, false), false);
  const auto td = trend_design(data, "y", main_effects(), false);
  const auto fit = regression_trend(data, "y", main_effects(), TrendScale::linear, CovarianceType::robust);
  const Eigen::Index n = td.X.rows(), k = td.X.cols();
  const Eigen::MatrixXd bread = (td.X.transpose() * td.X).inverse();
  const Eigen::VectorXd e = td.y - td.X * fit.coef;
  const Eigen::MatrixXd meat = td.X.transpose() * e.array().square().matrix().asDiagonal() * td.X;
  const Eigen::MatrixXd ref = bread * meat * bread * (static_cast<double>(n) / static_cast<double>(n - k));
  EXPECT_LT((fit.cov - ref).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(RegressionTrend, RejectsBatchCodingAndMissingWaves) {
  std::mt19937_64 rng(9);
  const auto data = as_dataset(random_draw(rng, 30, false), false);
  DesignSpec batch;
  batch.terms = {DesignTerm{{"sex"}, Coding::batch}};
  EXPECT_THROW(regression_trend(data, "y", batch, TrendScale::linear), ConfigError);
  Draw d = random_draw(rng, 30, false);
  const auto nowave = fixture::cell_dataset(kSexAge, d.cell_of, d.y, d.w);
  EXPECT_THROW(regression_trend(nowave, "y", DesignSpec{}, TrendScale::linear), DataError);
}

TEST(InteractionTrend, EstimandWorkedCase) {
  // β1 = 1, β2 = 0, β3 = 2, X̄¹ = 0.5, X̄⁰ = 0.4 → 1 + 0·0.1 + 2·0.5 = 2
  Draw d;
  for (std::size_t i = 0; i < 80; ++i) {
    const std::size_t j = i % 4 < 2 ? 0 : 3;  // sex F / M, age young
    const int t = static_cast<int>(i % 2);
    const double x = j == 3 ? 1.0 : 0.0;
    d.cell_of.push_back(j);
    d.wave.push_back(t);
    d.w.push_back(1.0);
    d.y.push_back(3.0 + 1.0 * t + 0.0 * x + 2.0 * x * t);
  }
  DesignSpec s;
  s.terms = {DesignTerm{{"sex"}, Coding::classical}};
  const auto data = as_dataset(d, false);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 0.4);
  const Eigen::VectorXd x1 = Eigen::VectorXd::Constant(1, 0.5);
  const auto r = interaction_trend(data, "y", s, x0, x1);
  EXPECT_NEAR(r.estimand.value, 2.0, 1e-10);
  EXPECT_NEAR(r.interactions(0), 2.0, 1e-10);
  EXPECT_NEAR(r.main_effects(0), 0.0, 1e-10);
  EXPECT_THROW(interaction_trend(data, "y", s, Eigen::VectorXd::Zero(2), x1), ConfigError);
}

TEST(InteractionTrend, NoInteractionsEqualsAdjustedCoefficient) {
  std::mt19937_64 rng(11);
  const auto data = as_dataset(random_draw(rng, 200, false), false);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 0.3);
  const auto r = interaction_trend(data, "y", main_effects(), x, x, false);
  const auto b = regression_trend(data, "y", main_effects(), TrendScale::linear);
  EXPECT_NEAR(r.estimand.value, b.time.value, 1e-12);
  EXPECT_NEAR(r.estimand.se, b.time.se, 1e-12);
}

TEST(InteractionTrend, AdjustmentMeansFromPopulation) {
  const CellGrid grid(kSexAge);
  const PoststratTable t = PoststratTable(grid, std::vector<std::size_t>(6, 1)).with_population({10, 20, 30, 15, 15, 10});
  const auto m = adjustment_means(main_effects(), t);
  ASSERT_EQ(m.size(), 3);
  const auto all = design_column_means(main_effects(), t);
  EXPECT_NEAR(all(0), 1.0, 1e-15);
  EXPECT_LT((m - all.tail(3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(InteractionAverage, WorkedValues) {
  EXPECT_NEAR(interaction_average({8.4, 0.017, -0.079, 0.007}, 70.0, 0.8), 9.9188, 1e-12);
  const InteractionCoefficients b{9.5, -0.02, 0.20, 0.41};
  EXPECT_NEAR(population_difference(b, 1.0, 0.5, 0.0, 0.5), 0.185, 1e-12);
}

TEST(InteractionAverage, ProbabilityLimitsAndErrors) {
  const InteractionCoefficients b{1.0, 2.0, 3.0, 4.0};
  EXPECT_DOUBLE_EQ(interaction_average(b, 0.5, 0.0), 1.0 + 2.0 * 0.5);
  EXPECT_DOUBLE_EQ(interaction_average(b, 0.5, 1.0), 1.0 + 1.0 + 3.0 + 2.0);
  EXPECT_THROW(interaction_average(b, 0.5, 1.2), DataError);
  EXPECT_THROW(interaction_average(b, 0.5, -0.1), DataError);
  EXPECT_THROW(interaction_average(b, 0.5, std::nan("")), DataError);
}

TEST(GroupConditional, FitAndBayesRule) {
  const Eigen::VectorXd z = (Eigen::VectorXd(6) << 1, 2, 3, 5, 6, 7).finished();
  const Eigen::VectorXd g = (Eigen::VectorXd(6) << 0, 0, 0, 1, 1, 1).finished();
  const auto m = GroupConditionalNormal::fit(z, g);
  EXPECT_DOUBLE_EQ(m.mean0, 2.0);
  EXPECT_DOUBLE_EQ(m.mean1, 6.0);
  EXPECT_NEAR(m.sd, 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(m.share1, 0.5);
  EXPECT_NEAR(m.probability(4.0), 0.5, 1e-15);
  const double a = std::exp(-0.5 * 16.0), c = 1.0;  // z = 6
  EXPECT_NEAR(m.probability(6.0), c / (a + c), 1e-14);
  const auto skew = GroupConditionalNormal::fit(z, g, 0.2);
  EXPECT_NEAR(skew.probability(4.0), 0.2, 1e-15);
  EXPECT_THROW(GroupConditionalNormal::fit(z, Eigen::VectorXd::Zero(6)), DataError);
  EXPECT_THROW(GroupConditionalNormal::fit(z, g, 1.0), DataError);
}

TEST(CompareTrend, ReportAndWriters) {
  std::mt19937_64 rng(12);
  const auto data = as_dataset(random_draw(rng, 400, true), true);
  TrendOptions opt;
  opt.spec = main_effects();
  opt.wave_means = std::make_pair(Eigen::VectorXd::Constant(3, 0.3), Eigen::VectorXd::Constant(3, 0.4));
  const auto r = compare_trend(data, "y", opt);
  EXPECT_TRUE(r.binary);
  EXPECT_TRUE(r.weighted.logit.has_value());
  EXPECT_TRUE(r.regression_logit.has_value());
  EXPECT_TRUE(r.interaction.has_value());
  std::ostringstream csv, text;
  write_trend_csv(csv, {r});
  write_trend_text(text, {r});
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
            "outcome,wave0_mean,wave0_se,wave1_mean,wave1_se,a_change,a_se,b_change,b_se,a_logit,a_logit_se,b_logit,"
            "b_logit_se,interaction,interaction_se");
  EXPECT_NE(text.str().find('%'), std::string::npos);
}
