#pragma once

// Small builders for datasets, cell tables and random model instances.

#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "poststrat/design_matrix.hpp"
#include "poststrat/errors.hpp"
#include "poststrat/raking.hpp"
#include "poststrat/survey_data.hpp"

namespace fixture {

using namespace poststrat;

inline FactorSpec factor(std::string name, std::vector<std::string> levels) {
  FactorSpec f;
  f.name = std::move(name);
  f.levels = std::move(levels);
  return f;
}

/// Factor with levels "l0", "l1", ...
inline FactorSpec numbered_factor(std::string name, std::size_t levels) {
  std::vector<std::string> labels;
  for (std::size_t l = 0; l < levels; ++l) labels.push_back("l" + std::to_string(l));
  return factor(std::move(name), std::move(labels));
}

/// Respondents placed in cells of the grid over `factors`, one outcome "y".
inline SurveyDataset cell_dataset(const std::vector<FactorSpec>& factors, const std::vector<std::size_t>& cell_of,
                                  const std::vector<double>& y,
                                  std::optional<std::vector<double>> weights = std::nullopt,
                                  std::optional<std::vector<int>> waves = std::nullopt) {
  const CellGrid grid(factors);
  std::vector<std::vector<std::size_t>> codes(factors.size(), std::vector<std::size_t>(cell_of.size()));
  for (std::size_t i = 0; i < cell_of.size(); ++i) {
    const auto levels = grid.cell_levels(cell_of[i]);
    for (std::size_t f = 0; f < factors.size(); ++f) codes[f][i] = levels[f];
  }
  std::vector<OutcomeColumn> outcomes;
  if (!y.empty()) outcomes.push_back(OutcomeColumn{"y", false, y});
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < cell_of.size(); ++i) ids.push_back(std::to_string(i + 1));
  return SurveyDataset(factors, std::move(codes), std::move(outcomes), std::move(weights), std::move(waves),
                       std::move(ids));
}

/// cell_of listing n[0] respondents in cell 0, then n[1] in cell 1, ...
inline std::vector<std::size_t> cells_from_counts(const std::vector<std::size_t>& n) {
  std::vector<std::size_t> cell_of;
  for (std::size_t j = 0; j < n.size(); ++j) cell_of.insert(cell_of.end(), n[j], j);
  return cell_of;
}

inline std::vector<std::string> names_of(const std::vector<FactorSpec>& factors) {
  std::vector<std::string> names;
  for (const auto& f : factors) names.push_back(f.name);
  return names;
}

/// Cell assignment over every factor of the dataset with N attached.
inline CellAssignment cells_with_population(const SurveyDataset& data, const std::vector<double>& N) {
  CellAssignment cells = assign_cells(data, names_of(data.factors()));
  cells.table = cells.table.with_population(N);
  return cells;
}

/// One-factor table with sample counts n and population counts N.
inline PoststratTable one_factor_table(const std::vector<std::size_t>& n, const std::vector<double>& N) {
  CellGrid grid({numbered_factor("cells", n.size())});
  return PoststratTable(grid, n).with_population(N);
}

inline Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// A random full-rank classical design on two factors (J ≤ 8, n ≤ 50,
/// k ≤ 6, constant first) with population counts and an outcome.
struct ClassicalInstance {
  std::vector<FactorSpec> factors;
  std::optional<SurveyDataset> data;
  std::optional<CellAssignment> cells;
  DesignSpec spec;
  DesignMatrices matrices;
  Eigen::VectorXd y;
};

inline ClassicalInstance random_classical_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> levels(1, 4);
  std::uniform_int_distribution<std::size_t> size(10, 50);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const std::size_t a = levels(rng);
    const std::size_t b = std::uniform_int_distribution<std::size_t>(1, 8 / a)(rng);
    ClassicalInstance inst;
    inst.factors = {numbered_factor("f", a), numbered_factor("g", b)};
    const std::size_t J = a * b;
    const std::size_t main_k = 1 + (a - 1) + (b - 1);
    const bool interact = main_k + (a - 1) * (b - 1) <= 6 && unif(rng) < 0.5;
    if (a > 1) inst.spec.terms.push_back(DesignTerm{{"f"}, Coding::classical});
    if (b > 1) inst.spec.terms.push_back(DesignTerm{{"g"}, Coding::classical});
    if (interact && a > 1 && b > 1) inst.spec.terms.push_back(DesignTerm{{"f", "g"}, Coding::classical});

    const std::size_t n = size(rng);
    std::vector<std::size_t> cell_of(n);
    std::uniform_int_distribution<std::size_t> cell(0, J - 1);
    for (auto& c : cell_of) c = cell(rng);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = 2.0 * static_cast<double>(cell_of[i] % 3) + normal(rng);
    std::vector<double> N(J);
    for (auto& v : N) v = 10.0 + 990.0 * unif(rng);

    inst.data.emplace(cell_dataset(inst.factors, cell_of, y));
    inst.cells.emplace(cells_with_population(*inst.data, N));
    try {
      inst.matrices = build_design(inst.spec, *inst.cells);
    } catch (const NumericalError&) {
      continue;  // rank deficient draw
    }
    inst.y = to_vector(y);
    return inst;
  }
}

/// One-factor ("cells") dataset with n_j respondents per cell and N attached.
inline CellAssignment one_factor_cells(const std::vector<std::size_t>& n, const std::vector<double>& N,
                                       const std::vector<double>& y = {}) {
  return cells_with_population(cell_dataset({numbered_factor("cells", n.size())}, cells_from_counts(n), y), N);
}

inline Eigen::VectorXd counts_vector(const std::vector<std::size_t>& n) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n.size()));
  for (std::size_t j = 0; j < n.size(); ++j) v(static_cast<Eigen::Index>(j)) = static_cast<double>(n[j]);
  return v;
}

/// Exchangeable-model instance: 2..10 cells, n_j in 1..30.
struct RandomExchangeable {
  std::vector<std::size_t> n;
  std::vector<double> N;
  double sigma_y = 1.0;
  double sigma_theta = 1.0;
};

inline RandomExchangeable random_exchangeable(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> cells(2, 10);
  std::uniform_int_distribution<std::size_t> size(1, 30);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  RandomExchangeable r;
  const std::size_t J = cells(rng);
  for (std::size_t j = 0; j < J; ++j) {
    r.n.push_back(size(rng));
    r.N.push_back(10.0 + 990.0 * unif(rng));
  }
  r.sigma_y = 0.2 + 2.0 * unif(rng);
  r.sigma_theta = 0.05 + 2.0 * unif(rng);
  return r;
}

inline MarginSpec margin(const std::string& f, const std::vector<std::string>& levels,
                         const std::vector<double>& targets) {
  std::vector<std::pair<std::string, double>> t;
  for (std::size_t l = 0; l < levels.size(); ++l) t.emplace_back(levels[l], targets[l]);
  return MarginSpec::one_way(f, t);
}

/// Random 3-factor table (2..4 levels each) with consistent one-way margins
/// from a hidden truth, plus an a:b margin when `two_way`.
struct RandomMarginProblem {
  std::vector<FactorSpec> factors;
  Eigen::VectorXd seed;
  std::vector<MarginSpec> margins;
};

inline RandomMarginProblem random_margin_problem(std::mt19937_64& rng, bool two_way) {
  std::uniform_int_distribution<std::size_t> levels(2, 4);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  RandomMarginProblem p;
  p.factors = {numbered_factor("a", levels(rng)), numbered_factor("b", levels(rng)), numbered_factor("c", levels(rng))};
  const CellGrid grid(p.factors);
  const auto J = static_cast<Eigen::Index>(grid.size());
  const Eigen::VectorXd truth = Eigen::VectorXd::NullaryExpr(J, [&] { return 1000.0 * unif(rng); });
  p.seed = Eigen::VectorXd::NullaryExpr(J, [&] { return unif(rng); });
  for (std::size_t k = 0; k < 3; ++k) {
    std::vector<double> t(p.factors[k].levels.size(), 0.0);
    for (Eigen::Index j = 0; j < J; ++j) t[grid.level_of(static_cast<std::size_t>(j), k)] += truth(j);
    p.margins.push_back(margin(p.factors[k].name, p.factors[k].levels, t));
  }
  if (two_way) {
    MarginSpec two;
    two.factors = {"a", "b"};
    for (std::size_t x = 0; x < p.factors[0].levels.size(); ++x) {
      for (std::size_t y = 0; y < p.factors[1].levels.size(); ++y) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < J; ++j) {
          const auto u = static_cast<std::size_t>(j);
          if (grid.level_of(u, 0) == x && grid.level_of(u, 1) == y) s += truth(j);
        }
        two.keys.push_back({p.factors[0].levels[x], p.factors[1].levels[y]});
        two.targets.push_back(s);
      }
    }
    p.margins.push_back(two);
  }
  return p;
}

/// Predictor list over sex, eth, age(4), edu(4): sex, eth, sex:eth classical;
/// age, edu, age:edu with `grouped` coding.
inline std::vector<FactorSpec> predictor_factors() {
  return {factor("sex", {"F", "M"}), factor("eth", {"white", "black"}), factor("age", {"18-29", "30-44", "45-64", "65+"}),
          factor("edu", {"<hs", "hs", "some", "coll"})};
}

inline DesignSpec predictor_list(Coding grouped) {
  DesignSpec spec;
  spec.terms = {DesignTerm::parse("sex", Coding::classical), DesignTerm::parse("eth", Coding::classical),
                DesignTerm::parse("sex:eth", Coding::classical), DesignTerm::parse("age", grouped),
                DesignTerm::parse("edu", grouped), DesignTerm::parse("age:edu", grouped)};
  return spec;
}

/// Every cell of the grid sampled twice, unit population counts.
inline CellAssignment every_cell_twice(const std::vector<FactorSpec>& factors) {
  CellGrid grid(factors);
  std::vector<std::size_t> cell_of;
  for (std::size_t j = 0; j < grid.size(); ++j) cell_of.insert(cell_of.end(), 2, j);
  return cells_with_population(cell_dataset(factors, cell_of, {}), std::vector<double>(grid.size(), 1.0));
}

}  // namespace fixture
