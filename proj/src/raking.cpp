#include "poststrat/raking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "poststrat/csv.hpp"

namespace poststrat {

namespace {

constexpr double kProportionSlack = 1e-9;
constexpr double kTotalSlack = 1e-8;

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.emplace_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

// A margin mapped onto the cell grid.
struct ResolvedMargin {
  std::vector<std::size_t> entry_of_cell;
  std::vector<double> target;
  double tolerance = 1e-8;
};

ResolvedMargin resolve(const CellGrid& grid, const MarginSpec& margin, double scale) {
  margin.validate();
  std::vector<std::size_t> fidx;
  for (const auto& name : margin.factors) {
    const auto f = grid.find_factor(name);
    if (!f) throw DataError("margin " + margin.name() + ": factor '" + name + "' is not in the cell grid");
    fidx.push_back(*f);
  }
  std::size_t combos = 1;
  std::vector<std::size_t> strides(fidx.size());
  for (std::size_t k = fidx.size(); k-- > 0;) {
    strides[k] = combos;
    combos *= grid.factors()[fidx[k]].levels.size();
  }
  std::vector<long> entry_of_combo(combos, -1);
  for (std::size_t e = 0; e < margin.keys.size(); ++e) {
    std::size_t combo = 0;
    for (std::size_t k = 0; k < fidx.size(); ++k) {
      const auto& spec = grid.factors()[fidx[k]];
      const auto level = spec.level_index(margin.keys[e][k]);
      if (!level) {
        throw DataError("margin " + margin.name() + ": unknown level '" + margin.keys[e][k] + "' of factor '" +
                        spec.name + "'");
      }
      combo += *level * strides[k];
    }
    if (entry_of_combo[combo] >= 0) {
      throw DataError("margin " + margin.name() + ": duplicate entry " + join(margin.keys[e], ':'));
    }
    entry_of_combo[combo] = static_cast<long>(e);
  }
  for (std::size_t combo = 0; combo < combos; ++combo) {
    if (entry_of_combo[combo] < 0) {
      std::vector<std::string> labels;
      for (std::size_t k = 0; k < fidx.size(); ++k) {
        const auto& spec = grid.factors()[fidx[k]];
        labels.push_back(spec.levels[(combo / strides[k]) % spec.levels.size()]);
      }
      throw DataError("margin " + margin.name() + ": no target for " + join(labels, ':'));
    }
  }

  ResolvedMargin out;
  out.tolerance = margin.tolerance;
  out.entry_of_cell.resize(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    std::size_t combo = 0;
    for (std::size_t k = 0; k < fidx.size(); ++k) combo += grid.level_of(j, fidx[k]) * strides[k];
    out.entry_of_cell[j] = static_cast<std::size_t>(entry_of_combo[combo]);
  }
  out.target = margin.targets;
  for (double& t : out.target) t *= scale;
  return out;
}

std::vector<double> margin_sums(const ResolvedMargin& m, const Eigen::VectorXd& table) {
  std::vector<double> sums(m.target.size(), 0.0);
  for (Eigen::Index j = 0; j < table.size(); ++j) sums[m.entry_of_cell[static_cast<std::size_t>(j)]] += table(j);
  return sums;
}

double margin_discrepancy(const ResolvedMargin& m, const Eigen::VectorXd& table, double total) {
  const auto sums = margin_sums(m, table);
  double worst = 0.0;
  for (std::size_t e = 0; e < sums.size(); ++e) {
    const double denom = m.target[e] > 0.0 ? m.target[e] : total;
    worst = std::max(worst, std::abs(sums[e] - m.target[e]) / denom);
  }
  return worst;
}

}  // namespace

MarginSpec MarginSpec::one_way(std::string factor, const std::vector<std::pair<std::string, double>>& targets) {
  MarginSpec m;
  m.factors = {std::move(factor)};
  for (const auto& [label, value] : targets) {
    m.keys.push_back({label});
    m.targets.push_back(value);
  }
  return m;
}

std::string MarginSpec::name() const { return join(factors, ':'); }

double MarginSpec::total() const {
  double t = 0.0;
  for (double v : targets) t += v;
  return t;
}

bool MarginSpec::is_proportion() const { return std::abs(total() - 1.0) <= kProportionSlack; }

void MarginSpec::validate() const {
  if (factors.empty() || factors.size() > 2) {
    throw ConfigError("a margin covers one factor or a pair of factors, got " + std::to_string(factors.size()));
  }
  if (factors.size() == 2 && factors[0] == factors[1]) throw ConfigError("margin names factor '" + factors[0] + "' twice");
  if (keys.size() != targets.size() || targets.empty()) {
    throw ConfigError("margin " + name() + ": needs one target per level entry");
  }
  for (const auto& key : keys) {
    if (key.size() != factors.size()) throw ConfigError("margin " + name() + ": entry has the wrong number of labels");
  }
  for (double t : targets) {
    if (!std::isfinite(t) || t < 0.0) throw DataError("margin " + name() + ": targets must be finite and non-negative");
  }
  if (!(total() > 0.0)) throw DataError("margin " + name() + ": targets sum to zero");
  if (!(tolerance > 0.0)) throw ConfigError("margin " + name() + ": tolerance must be positive");
}

void FactorWeightRule::validate() const {
  for (const auto& [level, m] : multipliers) {
    if (!(m > 0.0) || !std::isfinite(m)) {
      throw ConfigError("weight rule for '" + factor + "': multiplier for level '" + level + "' must be positive");
    }
  }
}

IpfResult ipf(const CellGrid& grid, const Eigen::VectorXd& seed, const std::vector<MarginSpec>& margins,
              const IpfOptions& options) {
  if (static_cast<std::size_t>(seed.size()) != grid.size()) throw DataError("ipf: seed does not match the cell grid");
  if (margins.empty()) throw ConfigError("ipf: no margins given");
  for (Eigen::Index j = 0; j < seed.size(); ++j) {
    if (!std::isfinite(seed(j)) || seed(j) < 0.0) throw DataError("ipf: seed cells must be finite and non-negative");
  }
  const double seed_total = seed.sum();
  if (!(seed_total > 0.0)) throw DataError("ipf: seed is all zero");

  std::optional<double> count_total;
  for (const auto& m : margins) {
    m.validate();
    if (m.is_proportion()) continue;
    if (!count_total) {
      count_total = m.total();
    } else if (std::abs(m.total() - *count_total) > kTotalSlack * *count_total) {
      std::ostringstream msg;
      msg << "ipf: inconsistent margin totals (" << csv::format_number(*count_total) << " vs "
          << csv::format_number(m.total()) << " for margin " << m.name() << ")";
      throw DataError(msg.str());
    }
  }
  const double total = count_total.value_or(seed_total);
  std::vector<ResolvedMargin> resolved;
  for (const auto& m : margins) resolved.push_back(resolve(grid, m, m.is_proportion() ? total : 1.0));

  IpfResult result;
  result.table = seed;
  auto measure = [&] {
    double worst = 0.0;
    bool ok = true;
    result.margin_discrepancy.clear();
    for (const auto& m : resolved) {
      const double d = margin_discrepancy(m, result.table, total);
      result.margin_discrepancy.push_back(d);
      worst = std::max(worst, d);
      ok = ok && d <= m.tolerance;
    }
    result.discrepancy.push_back(worst);
    return ok;
  };

  result.converged = measure();
  while (!result.converged && result.sweeps < options.max_sweeps) {
    for (std::size_t mi = 0; mi < resolved.size(); ++mi) {
      const auto& m = resolved[mi];
      const auto sums = margin_sums(m, result.table);
      for (std::size_t e = 0; e < sums.size(); ++e) {
        if (sums[e] == 0.0 && m.target[e] > 0.0) {
          throw DataError("ipf: margin " + margins[mi].name() + " entry " + join(margins[mi].keys[e], ':') +
                          " has a positive target but no mass in the table");
        }
      }
      for (Eigen::Index j = 0; j < result.table.size(); ++j) {
        const std::size_t e = m.entry_of_cell[static_cast<std::size_t>(j)];
        if (sums[e] > 0.0) result.table(j) = result.table(j) * m.target[e] / sums[e];
      }
    }
    ++result.sweeps;
    result.converged = measure();
  }
  if (!result.converged) {
    std::ostringstream msg;
    msg << "ipf did not converge in " << options.max_sweeps << " sweeps; discrepancies:";
    for (std::size_t mi = 0; mi < margins.size(); ++mi) {
      msg << ' ' << margins[mi].name() << '=' << csv::format_number(result.margin_discrepancy[mi]);
    }
    throw IpfError(msg.str(), std::move(result));
  }
  return result;
}

WeightVector rake_weights(const CellAssignment& cells, const std::vector<MarginSpec>& margins,
                          const WeightVector& initial, const IpfOptions& options) {
  const PoststratTable& table = cells.table;
  const CellGrid& grid = table.grid();
  if (static_cast<std::size_t>(initial.unit.size()) != cells.cell_of.size()) {
    throw DataError("rake: initial weights do not match the sample size");
  }
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < cells.cell_of.size(); ++i) {
    const double w = initial.unit(static_cast<Eigen::Index>(i));
    if (!std::isfinite(w) || w < 0.0) throw DataError("rake: initial weights must be finite and non-negative");
    mass(static_cast<Eigen::Index>(cells.cell_of[i])) += w;
  }

  std::vector<MarginSpec> shares = margins;
  for (auto& m : shares) {
    m.validate();
    const double t = m.total();
    for (double& v : m.targets) v /= t;
    const auto r = resolve(grid, m, 1.0);
    const auto sums = margin_sums(r, mass);
    for (std::size_t e = 0; e < sums.size(); ++e) {
      if (m.targets[e] > 0.0 && sums[e] == 0.0) {
        throw DataError("rake: margin " + m.name() + " level " + join(m.keys[e], ':') +
                        " has no sampled respondents");
      }
    }
  }
  const auto fitted = ipf(grid, mass, shares, options).table;

  WeightVector w;
  w.unit.resize(initial.unit.size());
  for (std::size_t i = 0; i < cells.cell_of.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(cells.cell_of[i]);
    const auto u = static_cast<Eigen::Index>(i);
    w.unit(u) = mass(j) > 0.0 ? initial.unit(u) * fitted(j) / mass(j) : 0.0;
  }
  const auto n_j = table.sample_counts();
  w.cell.resize(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t j = 0; j < grid.size(); ++j) {
    w.cell(static_cast<Eigen::Index>(j)) = n_j[j] > 0 ? fitted(static_cast<Eigen::Index>(j)) / static_cast<double>(n_j[j]) : 0.0;
  }
  w.source = WeightSource::raking;
  return normalized_to_n(std::move(w));
}

Eigen::VectorXd factor_multipliers(const SurveyDataset& dataset, const std::vector<FactorWeightRule>& rules) {
  Eigen::VectorXd raw = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(dataset.size()));
  for (const auto& rule : rules) {
    rule.validate();
    const FactorSpec& spec = dataset.factor(rule.factor);
    std::vector<double> by_level(spec.levels.size(), 0.0);
    for (std::size_t l = 0; l < spec.levels.size(); ++l) {
      const auto it = rule.multipliers.find(spec.levels[l]);
      if (it != rule.multipliers.end()) by_level[l] = it->second;
    }
    const auto codes = dataset.levels(rule.factor);
    for (std::size_t i = 0; i < codes.size(); ++i) {
      const double m = by_level[codes[i]];
      if (m == 0.0) {
        throw DataError("weight rule for '" + rule.factor + "' has no multiplier for level '" +
                        spec.levels[codes[i]] + "' (row " + std::to_string(i + 1) + ")");
      }
      raw(static_cast<Eigen::Index>(i)) *= m;
    }
  }
  return raw;
}

WeightVector factor_weights(const SurveyDataset& dataset, const std::vector<FactorWeightRule>& rules) {
  WeightVector w;
  w.unit = factor_multipliers(dataset, rules);
  w.source = WeightSource::factor_rules;
  return normalized_to_n(std::move(w));
}

std::vector<MarginSpec> read_margins_csv(std::istream& in) {
  const auto table = csv::read(in);
  const auto fcol = table.require_column("factor");
  const auto lcol = table.require_column("level");
  const auto tcol = table.require_column("target");
  std::vector<MarginSpec> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto factors = split(row[fcol], ':');
    auto labels = split(row[lcol], ':');
    if (labels.size() != factors.size()) {
      throw DataError("margins row " + std::to_string(r + 2) + ": level '" + row[lcol] + "' does not match factor '" +
                      row[fcol] + "'");
    }
    const auto value = csv::parse_number(row[tcol], r + 2, "target");
    if (!value) throw DataError("margins row " + std::to_string(r + 2) + ": missing target");
    auto it = std::find_if(out.begin(), out.end(), [&](const MarginSpec& m) { return m.factors == factors; });
    if (it == out.end()) {
      out.push_back(MarginSpec{std::move(factors), {}, {}});
      it = std::prev(out.end());
    }
    it->keys.push_back(std::move(labels));
    it->targets.push_back(*value);
  }
  if (out.empty()) throw DataError("margins file has no rows");
  for (const auto& m : out) m.validate();
  return out;
}

std::vector<MarginSpec> read_margins_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open margins file '" + path + "'");
  return read_margins_csv(in);
}

void write_margins_csv(std::ostream& out, const std::vector<MarginSpec>& margins) {
  csv::write_row(out, {"factor", "level", "target"});
  for (const auto& m : margins) {
    for (std::size_t e = 0; e < m.targets.size(); ++e) {
      csv::write_row(out, {m.name(), join(m.keys[e], ':'), csv::format_number(m.targets[e])});
    }
  }
}

}  // namespace poststrat
