#include <gtest/gtest.h>

#include "poststrat/classical.hpp"
#include "poststrat/config.hpp"
#include "poststrat/errors.hpp"
#include "support/fixtures.hpp"

using namespace poststrat;

namespace {

const char* kDesign = R"({
  "factors": [{"name": "sex", "levels": ["F", "M"], "baseline": "M"},
              {"name": "age", "levels": ["young", "mid", "old"]}],
  "outcomes": ["y"],
  "terms": [{"term": "sex", "coding": "classical"}, {"term": "sex:age", "coding": "batch"}],
  "sigma": {"sigma_y": 1.5, "batches": {"sex:age": 0.5}},
  "rules": [{"factor": "age", "multipliers": {"young": 1, "mid": 0.5, "old": 2}}]
})";

const char* kScenario = R"({
  "population": {"factors": [{"name": "sex", "levels": ["F", "M"]}], "proportions": [0.4, 0.6], "size": 2000,
                 "outcome": {"name": "y", "family": "normal", "mean": [0, 1], "sd": [1, 1]}},
  "design": {"propensity": [0.5, 1.0], "response": [0.9, 0.8], "target_size": 150},
  "estimators": [{"name": "ps", "type": "mean", "weights": "full_poststrat", "cells": ["sex"], "se": ["srs", "model_based"]},
                 {"name": "raw", "type": "mean", "weights": "unit", "se": ["srs"]}],
  "reps": 25
})";

std::string replace(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return text.replace(pos, from.size(), to);
}

}  // namespace

TEST(DesignConfig, ParsesEveryField) {
  const auto cfg = parse_design_config(kDesign);
  ASSERT_EQ(cfg.schema.factors.size(), 2u);
  EXPECT_EQ(cfg.schema.factors[0].baseline, 1u);
  EXPECT_EQ(cfg.schema.factors[1].levels.size(), 3u);
  ASSERT_EQ(cfg.spec.terms.size(), 2u);
  EXPECT_EQ(cfg.spec.terms[1].coding, Coding::batch);
  EXPECT_EQ(cfg.spec.terms[1].name(), "sex:age");
  ASSERT_TRUE(cfg.sigma.has_value());
  EXPECT_DOUBLE_EQ(cfg.sigma->sigma_y, 1.5);
  EXPECT_DOUBLE_EQ(cfg.sigma->sigma_batch.at("sex:age"), 0.5);
  ASSERT_EQ(cfg.rules.size(), 1u);
  EXPECT_EQ(cfg.cell_factors(true), (std::vector<std::string>{"sex", "age"}));
  EXPECT_FALSE(cfg.source.empty());
}

TEST(DesignConfig, NoTermsUsesAllFactorsWhenAsked) {
  const auto cfg = parse_design_config(R"({"factors": [{"name": "a", "levels": ["x", "y"]},
                                                        {"name": "b", "levels": ["u", "v"]}]})");
  EXPECT_TRUE(cfg.spec.terms.empty());
  EXPECT_EQ(cfg.cell_factors(true), (std::vector<std::string>{"a", "b"}));
  EXPECT_TRUE(cfg.cell_factors(false).empty());
}

TEST(DesignConfig, Errors) {
  EXPECT_THROW(parse_design_config("{not json"), ConfigError);
  EXPECT_THROW(parse_design_config(R"({"outcomes": ["y"]})"), ConfigError);
  EXPECT_THROW(parse_design_config(replace(kDesign, "\"outcomes\"", "\"outcome\"")), ConfigError);
  EXPECT_THROW(parse_design_config(replace(kDesign, "\"baseline\": \"M\"", "\"baseline\": \"X\"")), ConfigError);
  EXPECT_THROW(parse_design_config(replace(kDesign, "{\"term\": \"sex\",", "{\"term\": \"edu\",")), ConfigError);
  EXPECT_THROW(parse_design_config(replace(kDesign, "\"coding\": \"batch\"", "\"coding\": \"random\"")), ConfigError);
  EXPECT_THROW(read_design_config_file("/nonexistent/design.json"), ConfigError);
}

TEST(Scenario, ParsesAndBuildsEstimators) {
  const auto sc = parse_scenario(kScenario);
  EXPECT_EQ(sc.reps, 25u);
  EXPECT_EQ(sc.population.size, 2000u);
  EXPECT_EQ(sc.design.response, (std::vector<double>{0.9, 0.8}));
  ASSERT_EQ(sc.estimators.size(), 2u);
  EXPECT_EQ(sc.estimators[0].se_methods, (std::vector<SEMethod>{SEMethod::srs, SEMethod::model_based}));
  const auto pop = generate_population(sc.population, 3);
  const auto est = build_estimators(sc, pop);
  ASSERT_EQ(est.size(), 2u);
  EXPECT_EQ(est[0].name, "ps");
  EXPECT_DOUBLE_EQ(est[0].truth, pop.mean());
  const auto t = evaluate_estimators(pop, sc.design, est, {sc.reps, 1, 1});
  EXPECT_EQ(t.row("ps").reps, 25u);
}

TEST(Scenario, Errors) {
  EXPECT_THROW(parse_scenario(replace(kScenario, "\"reps\"", "\"repetitions\"")), ConfigError);
  EXPECT_THROW(parse_scenario(replace(kScenario, "\"type\": \"mean\", \"weights\": \"unit\"",
                                      "\"type\": \"weighted_diff\", \"weights\": \"unit\"")),
               ConfigError);
  EXPECT_THROW(parse_scenario(replace(kScenario, "\"name\": \"raw\"", "\"name\": \"ps\"")), ConfigError);
  EXPECT_THROW(parse_scenario(replace(kScenario, "\"family\": \"normal\"", "\"family\": \"poisson\"")), ConfigError);
  EXPECT_THROW(parse_scenario(replace(kScenario, "\"se\": [\"srs\"]", "\"se\": [\"bootstrap\"]")), ConfigError);
}

TEST(MakeProcedure, Names) {
  const std::vector<FactorSpec> f{fixture::factor("sex", {"F", "M"})};
  const auto pop = population_counts(CellGrid(f), std::vector<double>{60, 40});
  const auto data = fixture::cell_dataset(f, fixture::cells_from_counts({2, 3}), {1, 1, 0, 0, 0});
  DesignSpec spec;
  spec.terms = {DesignTerm{{"sex"}, Coding::classical}};
  for (const char* name : {"full_poststrat", "classical"}) {
    const auto w = make_procedure(name, {"sex"}, spec, pop, "y", std::nullopt)(data);
    EXPECT_NEAR(weighted_mean(fixture::to_vector({1, 1, 0, 0, 0}), w), 0.6, 1e-12) << name;
  }
  EXPECT_TRUE(make_procedure("unit", {}, spec, std::nullopt, "y", std::nullopt)(data).unit.isOnes());
  EXPECT_THROW(make_procedure("magic", {"sex"}, spec, pop, "y", std::nullopt), ConfigError);
  EXPECT_THROW(make_procedure("full_poststrat", {"sex"}, spec, std::nullopt, "y", std::nullopt), ConfigError);
  EXPECT_THROW(make_procedure("hierarchical", {"sex"}, spec, pop, "y", std::nullopt), ConfigError);
  EXPECT_THROW(make_procedure("factor_rules", {}, spec, std::nullopt, "y", std::nullopt), ConfigError);
}

TEST(MakeProcedure, ClassicalOnFinerGrid) {
  const std::vector<FactorSpec> f{fixture::factor("sex", {"F", "M"}), fixture::factor("age", {"young", "old"})};
  const auto pop = population_counts(CellGrid(f), std::vector<double>{30, 30, 20, 20});
  const auto data = fixture::cell_dataset(f, fixture::cells_from_counts({2, 1, 3, 1}), {});
  const auto w = make_procedure("classical", {"sex", "age"}, DesignSpec{}, pop, "", std::nullopt)(data);
  EXPECT_EQ(w.cell.size(), 4);
  EXPECT_TRUE(w.cell.isOnes(1e-12));
  DesignSpec spec;
  spec.terms = {DesignTerm{{"age"}, Coding::classical}};
  EXPECT_THROW(make_procedure("classical", {"sex"}, spec, pop, "", std::nullopt), ConfigError);
}
