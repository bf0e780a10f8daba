#include "poststrat/trend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "poststrat/classical.hpp"
#include "poststrat/csv.hpp"
#include "poststrat/errors.hpp"
#include "poststrat/variance.hpp"

namespace poststrat {

namespace {

Estimate coefficient(const Eigen::VectorXd& coef, const Eigen::MatrixXd& cov, Eigen::Index c) {
  return {coef(c), std::sqrt(cov(c, c))};
}

Estimate logit_change(const Estimate& m0, const Estimate& m1) {
  const double d0 = m0.value * (1.0 - m0.value);
  const double d1 = m1.value * (1.0 - m1.value);
  return {logit(m1.value) - logit(m0.value), std::sqrt(std::pow(m1.se / d1, 2) + std::pow(m0.se / d0, 2))};
}

}  // namespace

Estimate weighted_wave_mean(const SurveyDataset& wave, const std::string& outcome, const WaveSEOptions& options) {
  const SurveyDataset d = wave.complete_cases(outcome);
  if (!options.procedure && !d.has_weights()) throw DataError("wave has no weights");
  const WeightingProcedure procedure = options.procedure.value_or(given_procedure());
  const WeightVector w = procedure(d);
  const Eigen::VectorXd y = outcome_vector(d, outcome);
  Estimate out;
  out.value = weighted_mean(y, w);
  switch (options.method) {
    case SEMethod::srs: out.se = se_srs(y); break;
    case SEMethod::fixed_weight: out.se = se_fixed_weight(y, w.unit); break;
    case SEMethod::inverse_probability: out.se = se_invprob(y, w.unit); break;
    case SEMethod::jackknife_cells:
      out.se = jackknife_cells_se(d, procedure, weighted_mean_estimand(outcome), {options.threads});
      break;
    case SEMethod::model_based:
      throw ConfigError("model_based SEs are not available for weighted wave means");
  }
  return out;
}

WeightedDiff weighted_diff(const SurveyDataset& wave0, const SurveyDataset& wave1, const std::string& outcome,
                           const WaveSEOptions& options) {
  WeightedDiff out;
  out.wave0 = weighted_wave_mean(wave0, outcome, options);
  out.wave1 = weighted_wave_mean(wave1, outcome, options);
  out.change = {out.wave1.value - out.wave0.value, std::hypot(out.wave0.se, out.wave1.se)};
  const bool binary = wave0.outcome(outcome).binary && wave1.outcome(outcome).binary;
  const auto inside = [](double m) { return m > 0.0 && m < 1.0; };
  if (binary && inside(out.wave0.value) && inside(out.wave1.value)) out.logit = logit_change(out.wave0, out.wave1);
  return out;
}

TrendDesign trend_design(const SurveyDataset& combined, const std::string& outcome, const DesignSpec& spec,
                         bool interactions) {
  spec.validate();
  if (spec.has_batches()) throw ConfigError("trend regressions take classical coding only");
  if (!combined.has_waves()) throw DataError("trend regression needs a wave column");
  const SurveyDataset d = combined.complete_cases(outcome);
  const DesignMatrices m = build_design(spec, assign_cells(d, spec.factor_names()));
  const Eigen::Index n = m.rows();
  const Eigen::Index k = m.columns() - 1;

  TrendDesign out;
  out.adjustment_columns = k;
  out.X.resize(n, 2 + k + (interactions ? k : 0));
  out.X.col(0).setOnes();
  const auto waves = d.waves();
  for (Eigen::Index i = 0; i < n; ++i) out.X(i, 1) = waves[static_cast<std::size_t>(i)];
  out.X.middleCols(2, k) = m.X.rightCols(k);
  out.column_names = {"(Intercept)", "z"};
  for (Eigen::Index c = 1; c <= k; ++c) out.column_names.push_back(m.column_names[static_cast<std::size_t>(c)]);
  if (interactions) {
    out.X.rightCols(k) = m.X.rightCols(k).array().colwise() * out.X.col(1).array();
    for (Eigen::Index c = 1; c <= k; ++c) out.column_names.push_back(m.column_names[static_cast<std::size_t>(c)] + ":z");
  }
  out.y = outcome_vector(d, outcome);
  return out;
}

RegressionTrend regression_trend(const SurveyDataset& combined, const std::string& outcome, const DesignSpec& spec,
                                 TrendScale scale, CovarianceType covariance) {
  const TrendDesign td = trend_design(combined, outcome, spec, false);
  RegressionTrend out;
  out.column_names = td.column_names;
  if (scale == TrendScale::linear) {
    auto fit = linear_fit(td.X, td.y, covariance);
    out.coef = std::move(fit.coef);
    out.cov = std::move(fit.cov);
  } else {
    auto fit = logistic_fit(td.X, td.y, td.column_names, covariance);
    out.coef = std::move(fit.coef);
    out.cov = std::move(fit.cov);
  }
  out.time = coefficient(out.coef, out.cov, 1);
  return out;
}

InteractionTrend interaction_trend(const SurveyDataset& combined, const std::string& outcome, const DesignSpec& spec,
                                   const Eigen::VectorXd& xbar0, const Eigen::VectorXd& xbar1, bool interactions,
                                   CovarianceType covariance) {
  const TrendDesign td = trend_design(combined, outcome, spec, interactions);
  const Eigen::Index k = td.adjustment_columns;
  if (xbar0.size() != k || xbar1.size() != k) {
    throw ConfigError("interaction trend: expected population means for " + std::to_string(k) +
                      " adjustment columns per wave");
  }
  const auto fit = linear_fit(td.X, td.y, covariance);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(td.X.cols());
  g(1) = 1.0;
  g.segment(2, k) = xbar1 - xbar0;
  if (interactions) g.tail(k) = xbar1;

  InteractionTrend out;
  out.estimand = {g.dot(fit.coef), std::sqrt(g.dot(fit.cov * g))};
  out.fit.coef = fit.coef;
  out.fit.cov = fit.cov;
  out.fit.column_names = td.column_names;
  out.fit.time = coefficient(fit.coef, fit.cov, 1);
  out.main_effects = fit.coef.segment(2, k);
  if (interactions) out.interactions = fit.coef.tail(k);
  return out;
}

Eigen::VectorXd adjustment_means(const DesignSpec& spec, const PoststratTable& table) {
  const Eigen::VectorXd all = design_column_means(spec, table);
  return all.tail(all.size() - 1);
}

double interaction_average(const InteractionCoefficients& b, double z, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DataError("group probability must lie in [0, 1]");
  return b.b0 + b.b1 * z + b.b2 * p + b.b3 * z * p;
}

double population_difference(const InteractionCoefficients& b, double z1, double p1, double z0, double p0) {
  return interaction_average(b, z1, p1) - interaction_average(b, z0, p0);
}

GroupConditionalNormal GroupConditionalNormal::fit(const Eigen::VectorXd& z, const Eigen::VectorXd& group,
                                                   std::optional<double> share1) {
  if (z.size() != group.size()) throw DataError("group model: predictor and group differ in length");
  double sum[2] = {0.0, 0.0};
  double count[2] = {0.0, 0.0};
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (group(i) != 0.0 && group(i) != 1.0) throw DataError("group model: group must be 0/1");
    if (!std::isfinite(z(i))) throw DataError("group model: predictor has missing values");
    const int g = group(i) == 1.0;
    sum[g] += z(i);
    count[g] += 1.0;
  }
  if (count[0] == 0.0 || count[1] == 0.0) throw DataError("group model: both groups need observations");
  if (count[0] + count[1] < 3.0) throw DataError("group model: need at least three observations");
  GroupConditionalNormal out;
  out.mean0 = sum[0] / count[0];
  out.mean1 = sum[1] / count[1];
  double ss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double r = z(i) - (group(i) == 1.0 ? out.mean1 : out.mean0);
    ss += r * r;
  }
  out.sd = std::sqrt(ss / (count[0] + count[1] - 2.0));
  if (!(out.sd > 0.0)) throw DataError("group model: predictor has no within-group variation");
  out.share1 = share1.value_or(count[1] / (count[0] + count[1]));
  if (!(out.share1 > 0.0 && out.share1 < 1.0)) throw DataError("group model: share must lie strictly in (0, 1)");
  return out;
}

double GroupConditionalNormal::probability(double z) const {
  const double a = (z - mean0) / sd;
  const double b = (z - mean1) / sd;
  return inv_logit(std::log(share1 / (1.0 - share1)) + 0.5 * (a * a - b * b));
}

TrendReport compare_trend(const SurveyDataset& combined, const std::string& outcome, const TrendOptions& options) {
  if (!combined.has_waves()) throw DataError("trend comparison needs a wave column");
  TrendReport report;
  report.outcome = outcome;
  report.binary = combined.outcome(outcome).binary;
  report.weighted = weighted_diff(combined.wave(0), combined.wave(1), outcome, options.se);
  report.regression =
      regression_trend(combined, outcome, options.spec, TrendScale::linear, options.covariance).time;
  if (report.binary) {
    report.regression_logit =
        regression_trend(combined, outcome, options.spec, TrendScale::logit, options.covariance).time;
  }
  if (options.wave_means) {
    report.interaction = interaction_trend(combined, outcome, options.spec, options.wave_means->first,
                                           options.wave_means->second, true, options.covariance)
                             .estimand;
  }
  return report;
}

void write_trend_csv(std::ostream& out, const std::vector<TrendReport>& reports) {
  csv::write_row(out, {"outcome", "wave0_mean", "wave0_se", "wave1_mean", "wave1_se", "a_change", "a_se", "b_change",
                       "b_se", "a_logit", "a_logit_se", "b_logit", "b_logit_se", "interaction", "interaction_se"});
  const auto num = [](double v) { return csv::format_number(v); };
  const auto opt = [&](const std::optional<Estimate>& e, bool se) {
    return e ? num(se ? e->se : e->value) : std::string("NA");
  };
  for (const auto& r : reports) {
    csv::write_row(out, {r.outcome, num(r.weighted.wave0.value), num(r.weighted.wave0.se), num(r.weighted.wave1.value),
                         num(r.weighted.wave1.se), num(r.weighted.change.value), num(r.weighted.change.se),
                         num(r.regression.value), num(r.regression.se), opt(r.weighted.logit, false),
                         opt(r.weighted.logit, true), opt(r.regression_logit, false), opt(r.regression_logit, true),
                         opt(r.interaction, false), opt(r.interaction, true)});
  }
}

void write_trend_text(std::ostream& out, const std::vector<TrendReport>& reports) {
  const auto cell = [](const std::optional<Estimate>& e, bool percent) -> std::string {
    if (!e) return "-";
    char buf[64];
    if (percent) {
      std::snprintf(buf, sizeof buf, "%.1f%% (%.1f%%)", 100.0 * e->value, 100.0 * e->se);
    } else {
      std::snprintf(buf, sizeof buf, "%.3f (%.3f)", e->value, e->se);
    }
    return buf;
  };
  const std::vector<std::string> header{"outcome", "wave 0", "wave 1", "(a) change", "(b) change", "(a) logit", "(b) logit"};
  std::vector<std::vector<std::string>> rows{header};
  for (const auto& r : reports) {
    rows.push_back({r.outcome, cell(r.weighted.wave0, r.binary), cell(r.weighted.wave1, r.binary),
                    cell(r.weighted.change, r.binary), cell(r.regression, r.binary), cell(r.weighted.logit, false),
                    cell(r.regression_logit, false)});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      line += c == 0 ? row[c] + std::string(width[c] - row[c].size(), ' ')
                     : std::string(width[c] - row[c].size(), ' ') + row[c];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  }
}

}  // namespace poststrat
