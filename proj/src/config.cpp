#include "poststrat/config.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "poststrat/errors.hpp"
#include "poststrat/trend.hpp"

namespace poststrat {

namespace {

using json = nlohmann::json;

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

std::string slurp(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + std::string(what) + " '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
}

template <class T>
T get(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  return obj.contains(key) ? get<T>(obj, key, where) : fallback;
}

std::vector<FactorSpec> parse_factors(const json& arr, const std::string& where, bool need_levels) {
  if (!arr.is_array()) throw ConfigError(where + ": 'factors' must be an array");
  std::vector<FactorSpec> out;
  for (const auto& f : arr) {
    const std::string ctx = where + " factor";
    if (f.is_string()) {
      if (need_levels) throw ConfigError(ctx + " '" + f.get<std::string>() + "' needs explicit levels");
      out.push_back({f.get<std::string>(), {}, 0});
      continue;
    }
    check_keys(f, {"name", "levels", "baseline"}, ctx);
    FactorSpec spec;
    spec.name = get<std::string>(f, "name", ctx);
    spec.levels = get_or<std::vector<std::string>>(f, "levels", {}, ctx + " '" + spec.name + "'");
    if (need_levels && spec.levels.empty()) throw ConfigError(ctx + " '" + spec.name + "' needs explicit levels");
    if (f.contains("baseline")) {
      const auto base = get<std::string>(f, "baseline", ctx);
      if (spec.levels.empty()) throw ConfigError(ctx + " '" + spec.name + "': a baseline needs explicit levels");
      const auto idx = spec.level_index(base);
      if (!idx) throw ConfigError(ctx + " '" + spec.name + "': baseline '" + base + "' is not a level");
      spec.baseline = *idx;
    }
    if (!spec.levels.empty()) spec.validate();
    out.push_back(std::move(spec));
  }
  return out;
}

DesignSpec parse_terms(const json& obj, const std::string& where) {
  DesignSpec spec;
  if (!obj.contains("terms")) return spec;
  const auto& terms = obj.at("terms");
  if (!terms.is_array()) throw ConfigError(where + ": 'terms' must be an array");
  for (const auto& t : terms) {
    if (t.is_string()) {
      spec.terms.push_back(DesignTerm::parse(t.get<std::string>(), Coding::classical));
      continue;
    }
    check_keys(t, {"term", "coding"}, where + " term");
    const auto coding = parse_coding(get_or<std::string>(t, "coding", "classical", where + " term"));
    spec.terms.push_back(DesignTerm::parse(get<std::string>(t, "term", where + " term"), coding));
  }
  spec.validate();
  return spec;
}

std::optional<VarianceComponents> parse_sigma(const json& obj, const std::string& where) {
  if (!obj.contains("sigma")) return std::nullopt;
  const auto& s = obj.at("sigma");
  check_keys(s, {"sigma_y", "batches"}, where + " sigma");
  VarianceComponents vc;
  vc.sigma_y = get<double>(s, "sigma_y", where + " sigma");
  if (s.contains("batches")) {
    for (const auto& [name, value] : s.at("batches").items()) {
      if (value.is_string() && value.get<std::string>() == "inf") {
        vc.sigma_batch[name] = std::numeric_limits<double>::infinity();
      } else if (value.is_number()) {
        vc.sigma_batch[name] = value.get<double>();
      } else {
        throw ConfigError(where + " sigma: batch '" + name + "' must be a number or \"inf\"");
      }
    }
  }
  vc.validate();
  return vc;
}

std::vector<SEMethod> parse_se_list(const json& obj, const std::string& where) {
  std::vector<SEMethod> out;
  if (!obj.contains("se")) return out;
  const auto& se = obj.at("se");
  if (se.is_string()) return {parse_se_method(se.get<std::string>())};
  for (const auto& m : get<std::vector<std::string>>(obj, "se", where)) out.push_back(parse_se_method(m));
  return out;
}

}  // namespace

std::vector<std::string> DesignConfig::cell_factors(bool all_when_empty) const {
  auto names = spec.factor_names();
  if (names.empty() && all_when_empty) {
    for (const auto& f : schema.factors) names.push_back(f.name);
  }
  return names;
}

DesignConfig parse_design_config(std::string_view json_text) {
  const json root = parse_json(json_text, "design file");
  const std::string where = "design file";
  check_keys(root, {"factors", "outcomes", "terms", "sigma", "rules"}, where);
  DesignConfig cfg;
  if (!root.contains("factors")) throw ConfigError(where + ": missing 'factors'");
  cfg.schema.factors = parse_factors(root.at("factors"), where, false);
  cfg.schema.outcomes = get_or<std::vector<std::string>>(root, "outcomes", {}, where);
  cfg.spec = parse_terms(root, where);
  for (const auto& f : cfg.spec.factor_names()) {
    if (std::none_of(cfg.schema.factors.begin(), cfg.schema.factors.end(),
                     [&](const FactorSpec& s) { return s.name == f; })) {
      throw ConfigError(where + ": term uses undeclared factor '" + f + "'");
    }
  }
  cfg.sigma = parse_sigma(root, where);
  if (root.contains("rules")) {
    for (const auto& r : root.at("rules")) {
      check_keys(r, {"factor", "multipliers"}, where + " rule");
      FactorWeightRule rule;
      rule.factor = get<std::string>(r, "factor", where + " rule");
      rule.multipliers = get<std::map<std::string, double>>(r, "multipliers", where + " rule");
      rule.validate();
      cfg.rules.push_back(std::move(rule));
    }
  }
  cfg.source = root.dump(2);
  return cfg;
}

DesignConfig read_design_config_file(const std::string& path) { return parse_design_config(slurp(path, "design file")); }

Scenario parse_scenario(std::string_view json_text) {
  const json root = parse_json(json_text, "scenario file");
  const std::string where = "scenario";
  check_keys(root, {"population", "design", "estimators", "reps"}, where);
  Scenario sc;

  const json& p = root.contains("population") ? root.at("population") : throw ConfigError(where + ": missing 'population'");
  const std::string pw = where + " population";
  check_keys(p, {"factors", "proportions", "wave1_proportions", "size", "two_waves", "outcome"}, pw);
  sc.population.factors = p.contains("factors") ? parse_factors(p.at("factors"), pw, true)
                                                : throw ConfigError(pw + ": missing 'factors'");
  sc.population.proportions = get<std::vector<double>>(p, "proportions", pw);
  if (p.contains("wave1_proportions")) sc.population.wave1_proportions = get<std::vector<double>>(p, "wave1_proportions", pw);
  sc.population.size = get_or<std::size_t>(p, "size", 100000, pw);
  sc.population.two_waves = get_or<bool>(p, "two_waves", false, pw);
  const json& o = p.contains("outcome") ? p.at("outcome") : throw ConfigError(pw + ": missing 'outcome'");
  const std::string ow = pw + " outcome";
  check_keys(o, {"name", "family", "mean", "sd", "wave_shift", "wave_interaction"}, ow);
  auto& out = sc.population.outcome;
  out.name = get_or<std::string>(o, "name", "y", ow);
  const auto family = get_or<std::string>(o, "family", "normal", ow);
  if (family == "normal") {
    out.family = OutcomeFamily::normal;
  } else if (family == "bernoulli") {
    out.family = OutcomeFamily::bernoulli;
  } else {
    throw ConfigError(ow + ": family must be 'normal' or 'bernoulli'");
  }
  out.mean = get<std::vector<double>>(o, "mean", ow);
  out.sd = get_or<std::vector<double>>(o, "sd", {}, ow);
  out.wave_shift = get_or<double>(o, "wave_shift", 0.0, ow);
  out.wave_interaction = get_or<std::vector<double>>(o, "wave_interaction", {}, ow);
  sc.population.validate();

  if (root.contains("design")) {
    const json& d = root.at("design");
    const std::string dw = where + " design";
    check_keys(d, {"propensity", "logistic", "response", "target_size"}, dw);
    sc.design.propensity = get_or<std::vector<double>>(d, "propensity", {}, dw);
    sc.design.response = get_or<std::vector<double>>(d, "response", {}, dw);
    sc.design.target_size = get_or<double>(d, "target_size", 500.0, dw);
    if (d.contains("logistic")) {
      const json& l = d.at("logistic");
      check_keys(l, {"intercept", "effects"}, dw + " logistic");
      LogisticPropensity lp;
      lp.intercept = get_or<double>(l, "intercept", 0.0, dw + " logistic");
      lp.effects = get_or<std::map<std::string, std::map<std::string, double>>>(l, "effects", {}, dw + " logistic");
      sc.design.logistic = std::move(lp);
    }
  }
  sc.design.validate(sc.population.grid());

  if (!root.contains("estimators") || !root.at("estimators").is_array() || root.at("estimators").empty()) {
    throw ConfigError(where + ": 'estimators' must be a non-empty array");
  }
  std::set<std::string> names;
  for (const auto& e : root.at("estimators")) {
    const std::string ew = where + " estimator";
    check_keys(e, {"name", "type", "weights", "cells", "terms", "sigma", "se", "scale"}, ew);
    EstimatorConfig ec;
    ec.name = get<std::string>(e, "name", ew);
    if (!names.insert(ec.name).second) throw ConfigError(ew + ": duplicate name '" + ec.name + "'");
    const std::string ctx = ew + " '" + ec.name + "'";
    ec.type = get_or<std::string>(e, "type", "mean", ctx);
    ec.weights = get_or<std::string>(e, "weights", ec.type == "weighted_diff" ? "given" : "unit", ctx);
    ec.cells = get_or<std::vector<std::string>>(e, "cells", {}, ctx);
    ec.spec = parse_terms(e, ctx);
    ec.sigma = parse_sigma(e, ctx);
    ec.se_methods = parse_se_list(e, ctx);
    const auto scale = get_or<std::string>(e, "scale", "linear", ctx);
    if (scale == "linear") {
      ec.scale = TrendScale::linear;
    } else if (scale == "logit") {
      ec.scale = TrendScale::logit;
    } else {
      throw ConfigError(ctx + ": scale must be 'linear' or 'logit'");
    }
    static const std::set<std::string> types{"mean", "weighted_diff", "regression_trend", "interaction_trend"};
    if (!types.count(ec.type)) throw ConfigError(ctx + ": unknown type '" + ec.type + "'");
    if (ec.type != "mean" && !sc.population.two_waves) {
      throw ConfigError(ctx + ": trend estimators need a two-wave population");
    }
    if (ec.type == "mean" && sc.population.two_waves) {
      throw ConfigError(ctx + ": mean estimators need a single-wave population");
    }
    sc.estimators.push_back(std::move(ec));
  }
  sc.reps = get_or<std::size_t>(root, "reps", 1000, where);
  sc.source = root.dump(2);
  return sc;
}

Scenario read_scenario_file(const std::string& path) { return parse_scenario(slurp(path, "scenario file")); }

WeightingProcedure make_procedure(const std::string& weights, const std::vector<std::string>& cells,
                                  const DesignSpec& spec, const std::optional<PopulationCounts>& population,
                                  const std::string& outcome, const std::optional<VarianceComponents>& sigma,
                                  const std::vector<FactorWeightRule>& rules) {
  const auto need_population = [&]() -> const PopulationCounts& {
    if (!population) throw ConfigError("'" + weights + "' weights need population counts");
    return *population;
  };
  if (weights == "unit") return unit_procedure();
  if (weights == "given") return given_procedure();
  if (weights == "full_poststrat") {
    const auto factors = cells.empty() ? spec.factor_names() : cells;
    return full_poststrat_procedure(factors, need_population());
  }
  if (weights == "classical") return classical_procedure(spec, need_population(), cells);
  if (weights == "hierarchical") {
    if (!sigma && !spec.has_batches()) throw ConfigError("hierarchical weights need at least one batch term");
    return hierarchical_procedure(spec, need_population(), outcome, sigma, cells);
  }
  if (weights == "factor_rules") {
    if (rules.empty()) throw ConfigError("factor_rules weights need weight rules");
    return factor_rules_procedure(rules);
  }
  throw ConfigError("unknown weights '" + weights + "'");
}

std::vector<NamedEstimator> build_estimators(const Scenario& scenario, const Population& population) {
  std::vector<NamedEstimator> out;
  const std::string& outcome = population.outcome.name;
  for (const auto& ec : scenario.estimators) {
    if (ec.type == "mean") {
      const PopulationCounts counts = population.population_counts(0);
      auto procedure = make_procedure(ec.weights, ec.cells, ec.spec, counts, outcome, ec.sigma);
      auto methods = ec.se_methods.empty() ? std::vector<SEMethod>{SEMethod::srs} : ec.se_methods;
      out.push_back(weighted_mean_estimator(ec.name, std::move(procedure), outcome, population.mean(0),
                                            std::move(methods), counts));
      continue;
    }
    const double truth = population.mean(1) - population.mean(0);
    if (ec.type == "weighted_diff") {
      WaveSEOptions se;
      if (ec.se_methods.size() > 1) throw ConfigError("estimator '" + ec.name + "': give one SE method");
      if (!ec.se_methods.empty()) se.method = ec.se_methods.front();
      if (ec.weights == "unit") {
        se.procedure = unit_procedure();
      } else if (ec.weights != "given") {
        throw ConfigError("estimator '" + ec.name + "': weighted differences use 'given' or 'unit' weights");
      }
      out.push_back(weighted_diff_estimator(ec.name, std::move(se), outcome, truth));
    } else if (ec.type == "regression_trend") {
      out.push_back(regression_trend_estimator(ec.name, ec.spec, outcome, truth, ec.scale));
    } else {
      std::vector<FactorSpec> factors;
      for (const auto& name : ec.spec.factor_names()) {
        factors.push_back(population.grid.factors()[population.grid.factor_index(name)]);
      }
      const CellGrid grid(factors);
      const PoststratTable empty(grid, std::vector<std::size_t>(grid.size(), 0));
      Eigen::VectorXd xbar[2];
      for (int w = 0; w < 2; ++w) {
        const auto counts = collapse_population(population.population_counts(w), ec.spec.factor_names());
        xbar[w] = adjustment_means(ec.spec, attach_population(empty, counts));
      }
      out.push_back(interaction_trend_estimator(ec.name, ec.spec, outcome, truth, xbar[0], xbar[1]));
    }
  }
  return out;
}

}  // namespace poststrat
