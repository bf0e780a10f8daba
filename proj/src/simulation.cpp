#include "poststrat/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <thread>
#include <unordered_set>

#include "poststrat/classical.hpp"
#include "poststrat/csv.hpp"
#include "poststrat/errors.hpp"
#include "poststrat/regression.hpp"
#include "poststrat/variance.hpp"

namespace poststrat {

namespace {

constexpr double kShareSlack = 1e-9;

void check_shares(const std::vector<double>& p, std::size_t J, const char* what) {
  if (p.size() != J) {
    throw ConfigError(std::string(what) + ": expected " + std::to_string(J) + " cell proportions, got " +
                      std::to_string(p.size()));
  }
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string(what) + ": proportions must be non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > kShareSlack) {
    throw ConfigError(std::string(what) + ": proportions sum to " + csv::format_number(total) + ", not 1");
  }
}

std::vector<std::size_t> multinomial(std::size_t N, const std::vector<double>& p, std::mt19937_64& rng) {
  std::vector<std::size_t> out(p.size(), 0);
  std::size_t remaining = N;
  double rest = 1.0;
  for (std::size_t j = 0; j < p.size() && remaining > 0; ++j) {
    if (j + 1 == p.size()) {
      out[j] = p[j] > 0.0 ? remaining : 0;
      break;
    }
    const double q = rest > 0.0 ? std::clamp(p[j] / rest, 0.0, 1.0) : 0.0;
    std::binomial_distribution<std::size_t> draw(remaining, q);
    out[j] = draw(rng);
    remaining -= out[j];
    rest -= p[j];
  }
  return out;
}

// k distinct indices from [0, N), sorted (Floyd's algorithm).
std::vector<std::size_t> choose(std::size_t N, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> out;
  if (k == 0) return out;
  if (k == N) {
    out.resize(N);
    for (std::size_t i = 0; i < N; ++i) out[i] = i;
    return out;
  }
  std::unordered_set<std::size_t> picked;
  for (std::size_t j = N - k; j < N; ++j) {
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, j)(rng);
    if (!picked.insert(t).second) picked.insert(j);
  }
  out.assign(picked.begin(), picked.end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double OutcomeModel::cell_mean(std::size_t cell, int wave) const {
  double m = mean[cell];
  if (wave == 1) {
    m += wave_shift;
    if (!wave_interaction.empty()) m += wave_interaction[cell];
  }
  return m;
}

CellGrid PopulationSpec::grid() const { return CellGrid(factors); }

void PopulationSpec::validate() const {
  const CellGrid g = grid();
  const std::size_t J = g.size();
  check_shares(proportions, J, "population");
  if (wave1_proportions) {
    if (!two_waves) throw ConfigError("wave-1 proportions given for a single-wave population");
    check_shares(*wave1_proportions, J, "population wave 1");
  }
  if (size == 0) throw ConfigError("population size must be positive");
  if (outcome.mean.size() != J) throw ConfigError("outcome model needs one mean per cell");
  if (!outcome.wave_interaction.empty() && outcome.wave_interaction.size() != J) {
    throw ConfigError("outcome model needs one wave interaction per cell");
  }
  if (outcome.family == OutcomeFamily::normal) {
    if (outcome.sd.size() != J) throw ConfigError("normal outcome model needs one sd per cell");
    for (double s : outcome.sd) {
      if (!std::isfinite(s) || s < 0.0) throw ConfigError("outcome sds must be non-negative");
    }
  }
  for (std::size_t j = 0; j < J; ++j) {
    for (int w = 0; w <= (two_waves ? 1 : 0); ++w) {
      const double m = outcome.cell_mean(j, w);
      if (!std::isfinite(m)) throw ConfigError("outcome means must be finite");
      if (outcome.family == OutcomeFamily::bernoulli && (m < 0.0 || m > 1.0)) {
        throw ConfigError("Bernoulli probability for cell " + g.cell_name(j) + " in wave " + std::to_string(w) +
                          " is outside [0, 1]");
      }
    }
  }
}

double Population::mean(int w) const {
  if (w < 0 || w >= static_cast<int>(offsets.size())) throw ConfigError("population has no wave " + std::to_string(w));
  const auto& off = offsets[static_cast<std::size_t>(w)];
  double sum = 0.0;
  for (std::size_t i = off.front(); i < off.back(); ++i) sum += y[i];
  return sum / static_cast<double>(off.back() - off.front());
}

PopulationCounts Population::population_counts(int w) const {
  if (w < 0 || w >= static_cast<int>(counts.size())) throw ConfigError("population has no wave " + std::to_string(w));
  return poststrat::population_counts(grid, counts[static_cast<std::size_t>(w)]);
}

Population generate_population(const PopulationSpec& spec, std::uint64_t seed) {
  spec.validate();
  // Replicate streams count up from 0; the population takes the last one.
  std::mt19937_64 rng = replicate_rng(seed, std::numeric_limits<std::uint64_t>::max());
  Population pop;
  pop.grid = spec.grid();
  pop.outcome = spec.outcome;
  pop.two_waves = spec.two_waves;
  const std::size_t J = pop.grid.size();
  const int waves = spec.two_waves ? 2 : 1;
  pop.y.reserve(spec.size * static_cast<std::size_t>(waves));
  for (int w = 0; w < waves; ++w) {
    const auto& p = w == 1 && spec.wave1_proportions ? *spec.wave1_proportions : spec.proportions;
    const auto n = multinomial(spec.size, p, rng);
    std::vector<double> N(J);
    std::vector<std::size_t> off{pop.y.size()};
    for (std::size_t j = 0; j < J; ++j) {
      N[j] = static_cast<double>(n[j]);
      if (n[j] == 0 && p[j] > 0.0) {
        pop.warnings.push_back("wave " + std::to_string(w) + ": cell " + pop.grid.cell_name(j) +
                               " is empty in the generated population");
      }
      const double m = spec.outcome.cell_mean(j, w);
      for (std::size_t u = 0; u < n[j]; ++u) {
        double value = 0.0;
        if (spec.outcome.family == OutcomeFamily::normal) {
          value = m + spec.outcome.sd[j] * std::normal_distribution<double>(0.0, 1.0)(rng);
        } else {
          value = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < m ? 1.0 : 0.0;
        }
        pop.y.push_back(value);
        pop.cell_of.push_back(j);
        pop.wave.push_back(w);
      }
      off.push_back(pop.y.size());
    }
    pop.counts.push_back(std::move(N));
    pop.offsets.push_back(std::move(off));
  }
  return pop;
}

std::vector<double> SamplingDesign::cell_propensities(const CellGrid& grid) const {
  validate(grid);
  const std::size_t J = grid.size();
  std::vector<double> out(J, 1.0);
  if (logistic) {
    for (std::size_t j = 0; j < J; ++j) {
      double eta = logistic->intercept;
      for (const auto& [factor, effects] : logistic->effects) {
        const std::size_t f = grid.factor_index(factor);
        const auto& label = grid.factors()[f].levels[grid.level_of(j, f)];
        const auto it = effects.find(label);
        if (it != effects.end()) eta += it->second;
      }
      out[j] = inv_logit(eta);
    }
  } else if (!propensity.empty()) {
    out = propensity;
  }
  if (!response.empty()) {
    for (std::size_t j = 0; j < J; ++j) out[j] *= response[j];
  }
  return out;
}

void SamplingDesign::validate(const CellGrid& grid) const {
  const std::size_t J = grid.size();
  const auto check = [&](const std::vector<double>& v, const char* what) {
    if (v.size() != J) throw ConfigError(std::string(what) + ": expected one value per cell (" + std::to_string(J) + ")");
    for (double p : v) {
      if (!(p > 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " values must lie in (0, 1]");
    }
  };
  if (logistic && !propensity.empty()) throw ConfigError("give either cell propensities or a logistic model, not both");
  if (!propensity.empty()) check(propensity, "propensity");
  if (!response.empty()) check(response, "response");
  if (logistic) {
    for (const auto& [factor, effects] : logistic->effects) {
      const auto f = grid.find_factor(factor);
      if (!f) throw ConfigError("logistic propensity refers to unknown factor '" + factor + "'");
      for (const auto& [label, value] : effects) {
        if (!grid.factors()[*f].level_index(label)) {
          throw ConfigError("logistic propensity refers to unknown level '" + label + "' of '" + factor + "'");
        }
        if (!std::isfinite(value)) throw ConfigError("logistic propensity effects must be finite");
      }
    }
  }
  if (!(target_size > 0.0) || !std::isfinite(target_size)) throw DataError("zero expected sample size");
}

std::vector<std::vector<double>> inclusion_probabilities(const Population& population, const SamplingDesign& design) {
  const auto rel = design.cell_propensities(population.grid);
  const std::size_t J = rel.size();
  std::vector<std::vector<double>> out;
  for (const auto& N : population.counts) {
    std::vector<double> pi(J, 0.0);
    std::vector<bool> capped(J, false);
    double target = design.target_size;
    while (true) {
      double mass = 0.0;
      for (std::size_t j = 0; j < J; ++j) {
        if (!capped[j]) mass += N[j] * rel[j];
      }
      if (!(mass > 0.0) || !(target > 0.0)) break;
      const double c = target / mass;
      bool changed = false;
      for (std::size_t j = 0; j < J; ++j) {
        if (!capped[j] && c * rel[j] >= 1.0) {
          capped[j] = true;
          pi[j] = 1.0;
          target -= N[j];
          changed = true;
        }
      }
      if (!changed) {
        for (std::size_t j = 0; j < J; ++j) {
          if (!capped[j]) pi[j] = c * rel[j];
        }
        break;
      }
    }
    double expected = 0.0;
    for (std::size_t j = 0; j < J; ++j) expected += N[j] * pi[j];
    if (!(expected > 0.0)) throw DataError("zero expected sample size");
    out.push_back(std::move(pi));
  }
  return out;
}

SurveyDataset draw_sample(const Population& population, const SamplingDesign& design, std::mt19937_64& rng) {
  const auto pi = inclusion_probabilities(population, design);
  const CellGrid& grid = population.grid;
  const std::size_t J = grid.size();
  std::vector<std::vector<std::size_t>> codes(grid.factor_count());
  OutcomeColumn outcome{population.outcome.name, population.outcome.family == OutcomeFamily::bernoulli, {}};
  std::vector<double> weights;
  std::vector<int> waves;
  std::vector<std::string> ids;
  for (std::size_t w = 0; w < population.offsets.size(); ++w) {
    const auto& off = population.offsets[w];
    for (std::size_t j = 0; j < J; ++j) {
      const std::size_t Nj = off[j + 1] - off[j];
      if (Nj == 0 || pi[w][j] == 0.0) continue;
      const std::size_t k = std::binomial_distribution<std::size_t>(Nj, pi[w][j])(rng);
      const auto levels = grid.cell_levels(j);
      for (std::size_t idx : choose(Nj, k, rng)) {
        const std::size_t unit = off[j] + idx;
        for (std::size_t f = 0; f < levels.size(); ++f) codes[f].push_back(levels[f]);
        outcome.values.push_back(population.y[unit]);
        weights.push_back(1.0 / pi[w][j]);
        waves.push_back(static_cast<int>(w));
        ids.push_back(std::to_string(unit + 1));
      }
    }
  }
  if (weights.empty()) throw DataError("the sample is empty");
  std::optional<std::vector<int>> wave_column;
  if (population.two_waves) wave_column = std::move(waves);
  return SurveyDataset(grid.factors(), std::move(codes), {std::move(outcome)}, std::move(weights),
                       std::move(wave_column), std::move(ids));
}

SurveyDataset draw_sample(const Population& population, const SamplingDesign& design, std::uint64_t seed) {
  auto rng = replicate_rng(seed, 0);
  return draw_sample(population, design, rng);
}

std::mt19937_64 replicate_rng(std::uint64_t seed, std::uint64_t replicate) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(replicate), static_cast<std::uint32_t>(replicate >> 32)};
  return std::mt19937_64(seq);
}

const CalibrationRow& CalibrationTable::row(std::string_view estimator) const {
  for (const auto& r : rows) {
    if (r.estimator == estimator) return r;
  }
  throw ConfigError("no estimator named '" + std::string(estimator) + "' in the calibration table");
}

CalibrationTable evaluate_estimators(const Population& population, const SamplingDesign& design,
                                     const std::vector<NamedEstimator>& estimators, const SimulationOptions& options) {
  if (options.reps < 2) throw ConfigError("simulation needs at least two replicates");
  if (estimators.empty()) throw ConfigError("no estimators to evaluate");
  const std::size_t R = options.reps;
  const std::size_t E = estimators.size();

  struct Outcome {
    std::optional<EstimatorOutput> output;
    std::string error;
  };
  std::vector<std::vector<Outcome>> results(R, std::vector<Outcome>(E));
  auto replicate = [&](std::size_t r) {
    auto rng = replicate_rng(options.seed, r);
    std::optional<SurveyDataset> sample;
    std::string sample_error;
    try {
      sample.emplace(draw_sample(population, design, rng));
    } catch (const std::exception& e) {
      sample_error = e.what();
    }
    for (std::size_t e = 0; e < E; ++e) {
      if (!sample) {
        results[r][e].error = sample_error;
        continue;
      }
      try {
        results[r][e].output = estimators[e].run(*sample);
      } catch (const std::exception& ex) {
        results[r][e].error = ex.what();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(R)));
  if (threads == 1) {
    for (std::size_t r = 0; r < R; ++r) replicate(r);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t r = t; r < R; r += threads) replicate(r);
      });
    }
    for (auto& th : pool) th.join();
  }

  CalibrationTable table;
  for (std::size_t e = 0; e < E; ++e) {
    CalibrationRow row;
    row.estimator = estimators[e].name;
    row.truth = estimators[e].truth;
    std::vector<double> est;
    for (std::size_t r = 0; r < R; ++r) {
      const auto& res = results[r][e];
      if (!res.output) {
        ++row.failures;
        if (row.first_error.empty()) row.first_error = res.error;
        continue;
      }
      est.push_back(res.output->estimate);
      for (const auto& [label, value] : res.output->se) {
        if (std::find(row.se_labels.begin(), row.se_labels.end(), label) == row.se_labels.end()) {
          row.se_labels.push_back(label);
        }
      }
    }
    row.reps = est.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (est.empty()) {
      row.mean = row.bias = row.bias_mcse = row.true_se = row.true_se_mcse = nan;
    } else {
      double sum = 0.0;
      for (double v : est) sum += v;
      row.mean = sum / static_cast<double>(est.size());
      row.bias = row.mean - row.truth;
      if (est.size() >= 2) {
        double ss = 0.0;
        for (double v : est) ss += (v - row.mean) * (v - row.mean);
        const double Rs = static_cast<double>(est.size());
        row.true_se = std::sqrt(ss / (Rs - 1.0));
        row.bias_mcse = row.true_se / std::sqrt(Rs);
        row.true_se_mcse = row.true_se / std::sqrt(2.0 * (Rs - 1.0));
      } else {
        row.true_se = row.bias_mcse = row.true_se_mcse = nan;
      }
    }
    for (const auto& label : row.se_labels) {
      double se_sum = 0.0;
      double covered = 0.0;
      double count = 0.0;
      for (std::size_t r = 0; r < R; ++r) {
        const auto& res = results[r][e];
        if (!res.output) continue;
        for (const auto& [l, value] : res.output->se) {
          if (l != label) continue;
          se_sum += value;
          covered += std::abs(res.output->estimate - row.truth) <= 1.96 * value ? 1.0 : 0.0;
          count += 1.0;
        }
      }
      row.mean_se.push_back(count > 0.0 ? se_sum / count : nan);
      row.coverage.push_back(count > 0.0 ? covered / count : nan);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_calibration_csv(std::ostream& out, const CalibrationTable& table) {
  std::vector<std::string> labels;
  for (const auto& row : table.rows) {
    for (const auto& l : row.se_labels) {
      if (std::find(labels.begin(), labels.end(), l) == labels.end()) labels.push_back(l);
    }
  }
  std::vector<std::string> header{"estimator", "truth", "reps", "failures", "mean", "bias", "bias_mcse", "true_se",
                                  "true_se_mcse"};
  for (const auto& l : labels) header.push_back("se_" + l);
  for (const auto& l : labels) header.push_back("coverage_" + l);
  header.push_back("first_error");
  csv::write_row(out, header);
  const auto num = [](double v) { return csv::format_number(v); };
  for (const auto& row : table.rows) {
    std::vector<std::string> fields{row.estimator,   num(row.truth),     std::to_string(row.reps),
                                    std::to_string(row.failures), num(row.mean), num(row.bias),
                                    num(row.bias_mcse), num(row.true_se), num(row.true_se_mcse)};
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& l : labels) {
        const auto it = std::find(row.se_labels.begin(), row.se_labels.end(), l);
        if (it == row.se_labels.end()) {
          fields.emplace_back("NA");
        } else {
          const auto k = static_cast<std::size_t>(it - row.se_labels.begin());
          fields.push_back(num(pass == 0 ? row.mean_se[k] : row.coverage[k]));
        }
      }
    }
    fields.push_back(row.first_error);
    csv::write_row(out, fields);
  }
}

NamedEstimator weighted_mean_estimator(std::string name, WeightingProcedure procedure, std::string outcome,
                                       double truth, std::vector<SEMethod> se_methods,
                                       std::optional<PopulationCounts> population) {
  for (SEMethod m : se_methods) {
    if (m == SEMethod::model_based && (!population || procedure.cell_factors.empty())) {
      throw ConfigError("estimator '" + name + "': model_based SEs need population counts and a cell-based procedure");
    }
  }
  auto run = [procedure = std::move(procedure), outcome, se_methods = std::move(se_methods),
              population = std::move(population)](const SurveyDataset& sample) {
    const SurveyDataset d = sample.complete_cases(outcome);
    const WeightVector w = procedure(d);
    const Eigen::VectorXd y = outcome_vector(d, outcome);
    EstimatorOutput out;
    out.estimate = weighted_mean(y, w);
    for (SEMethod m : se_methods) {
      double se = 0.0;
      switch (m) {
        case SEMethod::srs: se = se_srs(y); break;
        case SEMethod::fixed_weight: se = se_fixed_weight(y, w.unit); break;
        case SEMethod::inverse_probability: se = se_invprob(y, w.unit); break;
        case SEMethod::jackknife_cells: se = jackknife_cells_se(d, procedure, weighted_mean_estimand(outcome)); break;
        case SEMethod::model_based: {
          const auto cells = poststrat_cells(d, procedure.cell_factors, *population);
          se = std::sqrt(model_based_variance(w, cells, pooled_within_cell_sd(y, cells)));
          break;
        }
      }
      out.se.emplace_back(se_method_name(m), se);
    }
    return out;
  };
  return {std::move(name), truth, std::move(run)};
}

NamedEstimator weighted_diff_estimator(std::string name, WaveSEOptions se, std::string outcome, double truth) {
  auto run = [se = std::move(se), outcome](const SurveyDataset& sample) {
    const auto r = weighted_diff(sample.wave(0), sample.wave(1), outcome, se);
    return EstimatorOutput{r.change.value, {{se_method_name(se.method), r.change.se}}};
  };
  return {std::move(name), truth, std::move(run)};
}

NamedEstimator regression_trend_estimator(std::string name, DesignSpec spec, std::string outcome, double truth,
                                          TrendScale scale) {
  auto run = [spec = std::move(spec), outcome, scale](const SurveyDataset& sample) {
    const auto r = regression_trend(sample, outcome, spec, scale);
    return EstimatorOutput{r.time.value, {{"regression", r.time.se}}};
  };
  return {std::move(name), truth, std::move(run)};
}

NamedEstimator interaction_trend_estimator(std::string name, DesignSpec spec, std::string outcome, double truth,
                                           Eigen::VectorXd xbar0, Eigen::VectorXd xbar1) {
  auto run = [spec = std::move(spec), outcome, xbar0 = std::move(xbar0), xbar1 = std::move(xbar1)](
                 const SurveyDataset& sample) {
    const auto r = interaction_trend(sample, outcome, spec, xbar0, xbar1, true);
    return EstimatorOutput{r.estimand.value, {{"regression", r.estimand.se}}};
  };
  return {std::move(name), truth, std::move(run)};
}

}  // namespace poststrat
