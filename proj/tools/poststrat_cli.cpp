// Command-line front end: weight, rake, estimate, compare-trend, simulate.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "poststrat/classical.hpp"
#include "poststrat/config.hpp"
#include "poststrat/csv.hpp"
#include "poststrat/errors.hpp"
#include "poststrat/procedure.hpp"
#include "poststrat/raking.hpp"
#include "poststrat/simulation.hpp"
#include "poststrat/trend.hpp"
#include "poststrat/variance.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace poststrat;

namespace {

constexpr const char* kVersion = POSTSTRAT_VERSION;

struct Options {
  std::string survey;
  std::string population;
  std::string margins;
  std::string design;
  std::string scenario;
  std::vector<std::string> outcomes;
  std::vector<std::string> se_methods;
  std::vector<std::string> estimators;
  std::uint64_t seed = 1;
  std::size_t reps = 0;
  unsigned threads = 1;
  bool robust = false;
  std::string out;
};

// Files written by this run; removed again if the run fails.
class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) {}

  void open() {
    if (dir_.empty()) throw ConfigError("--out is required");
    std::error_code ec;
    if (!fs::exists(dir_)) {
      if (!fs::create_directories(dir_, ec)) throw ConfigError("cannot create output directory '" + dir_.string() + "'");
      created_ = true;
    } else if (!fs::is_directory(dir_)) {
      throw ConfigError("output path '" + dir_.string() + "' is not a directory");
    }
  }

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    const fs::path path = dir_ / name;
    written_.push_back(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    body(out);
    if (!out) throw ConfigError("error while writing '" + path.string() + "'");
    names_.push_back(name);
  }

  void rollback() {
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
    if (created_) fs::remove(dir_, ec);
  }

  const std::vector<std::string>& names() const { return names_; }

 private:
  fs::path dir_;
  bool created_ = false;
  std::vector<fs::path> written_;
  std::vector<std::string> names_;
};

json manifest(const std::string& command, const Options& o, const OutputDir& out) {
  json m;
  m["tool"] = "poststrat";
  m["version"] = kVersion;
  m["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  m["command"] = command;
  json args;
  if (!o.survey.empty()) args["survey"] = o.survey;
  if (!o.population.empty()) args["population"] = o.population;
  if (!o.margins.empty()) args["margins"] = o.margins;
  if (!o.design.empty()) args["design"] = o.design;
  if (!o.scenario.empty()) args["scenario"] = o.scenario;
  if (!o.outcomes.empty()) args["outcome"] = o.outcomes;
  if (!o.se_methods.empty()) args["se_methods"] = o.se_methods;
  if (!o.estimators.empty()) args["estimators"] = o.estimators;
  if (o.reps) args["reps"] = o.reps;
  if (o.robust) args["robust"] = true;
  args["seed"] = o.seed;
  args["out"] = o.out;
  m["arguments"] = args;
  m["outputs"] = out.names();
  return m;
}

void write_manifest(OutputDir& out, const std::string& command, const Options& o, const std::string& config_echo) {
  json m = manifest(command, o, out);
  m["outputs"].push_back("manifest.json");
  if (!config_echo.empty()) m["config"] = json::parse(config_echo);
  out.write("manifest.json", [&](std::ostream& s) { s << m.dump(2) << '\n'; });
}

std::vector<SEMethod> se_methods(const Options& o, std::vector<SEMethod> fallback) {
  if (o.se_methods.empty()) return fallback;
  std::vector<SEMethod> out;
  for (const auto& m : o.se_methods) out.push_back(parse_se_method(m));
  return out;
}

std::vector<std::string> all_factor_names(const SurveyDataset& d) {
  std::vector<std::string> names;
  for (const auto& f : d.factors()) names.push_back(f.name);
  return names;
}

// Population counts from --population, or an IPF table fitted to --margins.
std::optional<PopulationCounts> population_input(const Options& o, const SurveyDataset& d, bool required,
                                                 OutputDir* out) {
  if (!o.population.empty() && !o.margins.empty()) throw ConfigError("give either --population or --margins, not both");
  if (!o.population.empty()) return read_population_csv_file(o.population);
  if (!o.margins.empty()) {
    const auto margins = read_margins_csv_file(o.margins);
    const CellGrid grid(d.factors());
    const auto fit = ipf(grid, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(grid.size())), margins);
    auto counts = population_counts(grid, std::vector<double>(fit.table.data(), fit.table.data() + fit.table.size()));
    if (out) out->write("fitted_population.csv", [&](std::ostream& s) { write_population_csv(s, counts); });
    return counts;
  }
  if (required) throw ConfigError("one of --population or --margins is required");
  return std::nullopt;
}

int cmd_weight(const Options& o, OutputDir& out) {
  const auto cfg = read_design_config_file(o.design);
  SurveyDataset data = read_survey_csv_file(o.survey, cfg.schema);
  const std::string outcome = o.outcomes.empty() ? std::string() : o.outcomes.front();
  if (!outcome.empty()) data = data.complete_cases(outcome);
  out.open();
  const auto population = population_input(o, data, true, &out);
  const auto cells = cfg.cell_factors(true);
  const auto assignment = poststrat_cells(data, cells, *population);
  const auto names = o.estimators.empty() ? std::vector<std::string>{"full_poststrat", "classical"} : o.estimators;
  for (const auto& name : names) {
    const auto procedure = make_procedure(name, cells, cfg.spec, population, outcome, cfg.sigma, cfg.rules);
    if (name == "hierarchical" && !cfg.sigma && outcome.empty()) {
      throw ConfigError("hierarchical weights without fixed sigma need --outcome to fit the variance components");
    }
    const WeightVector w = procedure(data);
    out.write("weights_" + name + ".csv",
              [&](std::ostream& s) { write_unit_weights_csv(s, w, data.ids(), assignment.cell_of); });
    if (w.cell.size()) {
      out.write("cell_weights_" + name + ".csv", [&](std::ostream& s) { write_cell_weights_csv(s, w, assignment.table); });
    }
  }
  write_manifest(out, "weight", o, cfg.source);
  return 0;
}

int cmd_rake(const Options& o, OutputDir& out) {
  const auto cfg = read_design_config_file(o.design);
  const SurveyDataset data = read_survey_csv_file(o.survey, cfg.schema);
  if (o.margins.empty()) throw ConfigError("rake needs --margins");
  const auto margins = read_margins_csv_file(o.margins);
  out.open();
  const CellGrid grid(data.factors());
  const auto fit = ipf(grid, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(grid.size())), margins);
  const auto counts = population_counts(grid, std::vector<double>(fit.table.data(), fit.table.data() + fit.table.size()));
  out.write("fitted_population.csv", [&](std::ostream& s) { write_population_csv(s, counts); });
  out.write("ipf_history.csv", [&](std::ostream& s) {
    csv::write_row(s, {"sweep", "discrepancy"});
    for (std::size_t k = 0; k < fit.discrepancy.size(); ++k) {
      csv::write_row(s, {std::to_string(k), csv::format_number(fit.discrepancy[k])});
    }
  });
  const auto cells = assign_cells(data, all_factor_names(data));
  const WeightVector initial = data.has_weights() ? given_weights(data) : unit_weights(data.size());
  const WeightVector w = rake_weights(cells, margins, initial);
  out.write("weights_raking.csv", [&](std::ostream& s) { write_unit_weights_csv(s, w, data.ids(), cells.cell_of); });
  out.write("cell_weights_raking.csv", [&](std::ostream& s) { write_cell_weights_csv(s, w, cells.table); });
  write_manifest(out, "rake", o, cfg.source);
  return 0;
}

int cmd_estimate(const Options& o, OutputDir& out) {
  const auto cfg = read_design_config_file(o.design);
  const SurveyDataset data = read_survey_csv_file(o.survey, cfg.schema);
  if (o.outcomes.empty()) throw ConfigError("estimate needs --outcome");
  out.open();
  const auto population = population_input(o, data, true, &out);
  const auto cells = cfg.cell_factors(true);
  const auto methods =
      se_methods(o, {SEMethod::srs, SEMethod::fixed_weight, SEMethod::inverse_probability});
  const auto names = o.estimators.empty() ? std::vector<std::string>{"full_poststrat"} : o.estimators;

  std::vector<std::vector<std::string>> rows;
  for (const auto& outcome : o.outcomes) {
    const SurveyDataset d = data.complete_cases(outcome);
    for (const auto& name : names) {
      auto procedure = make_procedure(name, cells, cfg.spec, population, outcome, cfg.sigma, cfg.rules);
      std::vector<SEMethod> usable;
      for (SEMethod m : methods) {
        if (m != SEMethod::model_based || !procedure.cell_factors.empty()) usable.push_back(m);
      }
      const auto est = weighted_mean_estimator(name, procedure, outcome, 0.0, usable, population);
      const EstimatorOutput r = est.run(d);
      std::vector<std::string> row{outcome, name, csv::format_number(r.estimate)};
      for (SEMethod m : methods) {
        std::string value = "NA";
        for (const auto& [label, se] : r.se) {
          if (label == se_method_name(m)) value = csv::format_number(se);
        }
        row.push_back(value);
      }
      rows.push_back(std::move(row));
    }
  }
  out.write("estimates.csv", [&](std::ostream& s) {
    std::vector<std::string> header{"outcome", "estimator", "estimate"};
    for (SEMethod m : methods) header.push_back(std::string("se_") + se_method_name(m));
    csv::write_row(s, header);
    for (const auto& row : rows) csv::write_row(s, row);
  });
  write_manifest(out, "estimate", o, cfg.source);
  return 0;
}

// Per-wave adjustment means from a population file keyed by `wave` as well.
std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> wave_means(const std::string& path, const DesignSpec& spec,
                                                                      const SurveyDataset& data) {
  if (path.empty()) return std::nullopt;
  const auto counts = read_population_csv_file(path);
  const auto it = std::find(counts.factor_names.begin(), counts.factor_names.end(), "wave");
  if (it == counts.factor_names.end()) throw DataError("population file for compare-trend needs a 'wave' column");
  const auto wcol = static_cast<std::size_t>(it - counts.factor_names.begin());
  PopulationCounts by_wave[2];
  for (auto& p : by_wave) {
    for (std::size_t k = 0; k < counts.factor_names.size(); ++k) {
      if (k != wcol) p.factor_names.push_back(counts.factor_names[k]);
    }
  }
  for (std::size_t r = 0; r < counts.keys.size(); ++r) {
    const auto& label = counts.keys[r][wcol];
    if (label != "0" && label != "1") throw DataError("population wave labels must be 0 or 1, got '" + label + "'");
    auto& p = by_wave[label == "1"];
    std::vector<std::string> key;
    for (std::size_t k = 0; k < counts.keys[r].size(); ++k) {
      if (k != wcol) key.push_back(counts.keys[r][k]);
    }
    p.keys.push_back(std::move(key));
    p.counts.push_back(counts.counts[r]);
  }
  const auto factors = spec.factor_names();
  const auto cells = assign_cells(data, factors);
  Eigen::VectorXd xbar[2];
  for (int w = 0; w < 2; ++w) {
    xbar[w] = adjustment_means(spec, attach_population(cells.table, collapse_population(by_wave[w], factors)));
  }
  return std::make_pair(xbar[0], xbar[1]);
}

int cmd_compare_trend(const Options& o, OutputDir& out) {
  const auto cfg = read_design_config_file(o.design);
  const SurveyDataset data = read_survey_csv_file(o.survey, cfg.schema);
  if (o.outcomes.empty()) throw ConfigError("compare-trend needs --outcome");
  const auto methods = se_methods(o, {SEMethod::inverse_probability});
  if (methods.size() != 1) throw ConfigError("compare-trend takes a single SE method for the weighted means");
  TrendOptions options;
  options.spec = cfg.spec;
  options.se.method = methods.front();
  options.se.threads = o.threads;
  options.covariance = o.robust ? CovarianceType::robust : CovarianceType::conventional;
  options.wave_means = wave_means(o.population, cfg.spec, data);
  std::vector<TrendReport> reports;
  for (const auto& outcome : o.outcomes) reports.push_back(compare_trend(data, outcome, options));
  out.open();
  out.write("trend.csv", [&](std::ostream& s) { write_trend_csv(s, reports); });
  out.write("trend.txt", [&](std::ostream& s) { write_trend_text(s, reports); });
  write_manifest(out, "compare-trend", o, cfg.source);
  return 0;
}

int cmd_simulate(const Options& o, OutputDir& out) {
  const Scenario scenario = read_scenario_file(o.scenario);
  const Population population = generate_population(scenario.population, o.seed);
  for (const auto& w : population.warnings) std::cerr << "warning: " << w << '\n';
  const auto estimators = build_estimators(scenario, population);
  SimulationOptions options;
  options.reps = o.reps ? o.reps : scenario.reps;
  options.seed = o.seed;
  options.threads = o.threads;
  const CalibrationTable table = evaluate_estimators(population, scenario.design, estimators, options);
  out.open();
  out.write("calibration.csv", [&](std::ostream& s) { write_calibration_csv(s, table); });
  write_manifest(out, "simulate", o, scenario.source);
  return 0;
}

void report_error(const char* category, const std::string& message) {
  json e;
  e["error"] = category;
  e["message"] = message;
  std::cerr << e.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poststratification, implied weights, raking and trend comparison for survey data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_option("--seed", o.seed, "Random seed");
  };
  const auto survey = [&](CLI::App* sub) {
    sub->add_option("--survey", o.survey, "Survey CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--design", o.design, "Design JSON")->required()->check(CLI::ExistingFile);
  };
  const auto population = [&](CLI::App* sub) {
    auto* p = sub->add_option("--population", o.population, "Population counts CSV")->check(CLI::ExistingFile);
    auto* m = sub->add_option("--margins", o.margins, "Margin targets CSV (fitted by IPF)")->check(CLI::ExistingFile);
    p->excludes(m);
  };

  auto* weight = app.add_subcommand("weight", "Write implied and classical weight vectors");
  survey(weight);
  population(weight);
  weight->add_option("--estimators", o.estimators, "unit, given, full_poststrat, classical, hierarchical, factor_rules")
      ->delimiter(',');
  weight->add_option("--outcome", o.outcomes, "Outcome used to fit hierarchical variance components")->delimiter(',');
  common(weight);

  auto* rake = app.add_subcommand("rake", "Fit a population table to margins and rake the sample weights");
  survey(rake);
  rake->add_option("--margins", o.margins, "Margin targets CSV")->required()->check(CLI::ExistingFile);
  common(rake);

  auto* estimate = app.add_subcommand("estimate", "Poststratified estimates with standard errors");
  survey(estimate);
  population(estimate);
  estimate->add_option("--outcome", o.outcomes, "Outcome column(s)")->required()->delimiter(',');
  estimate->add_option("--estimators", o.estimators, "Weight constructions to compare")->delimiter(',');
  estimate->add_option("--se-methods", o.se_methods,
                       "srs, fixed_weight, inverse_probability, model_based, jackknife_cells")
      ->delimiter(',');
  common(estimate);

  auto* trend = app.add_subcommand("compare-trend", "Weighted-mean difference versus regression for a two-wave survey");
  survey(trend);
  trend->add_option("--population", o.population, "Population counts by wave (adds the interaction estimand)")
      ->check(CLI::ExistingFile);
  trend->add_option("--outcome", o.outcomes, "Outcome column(s)")->required()->delimiter(',');
  trend->add_option("--se-methods", o.se_methods, "SE method for the weighted means")->delimiter(',');
  trend->add_flag("--robust", o.robust, "Heteroskedasticity-robust regression SEs");
  trend->add_option("--threads", o.threads, "Worker threads for jackknife replicates");
  common(trend);

  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo calibration of estimators and SE methods");
  simulate->add_option("--scenario", o.scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--reps", o.reps, "Replicates (overrides the scenario)");
  simulate->add_option("--threads", o.threads, "Worker threads");
  common(simulate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("config", e.what());
    return exit_code(ErrorCategory::config);
  }

  OutputDir out(o.out);
  try {
    if (*weight) return cmd_weight(o, out);
    if (*rake) return cmd_rake(o, out);
    if (*estimate) return cmd_estimate(o, out);
    if (*trend) return cmd_compare_trend(o, out);
    return cmd_simulate(o, out);
  } catch (const Error& e) {
    out.rollback();
    report_error(category_name(e.category()), e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    out.rollback();
    report_error("numerical", e.what());
    return exit_code(ErrorCategory::numerical);
  }
}
