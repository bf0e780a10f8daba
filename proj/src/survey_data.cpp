#include "poststrat/survey_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include "poststrat/csv.hpp"
#include "poststrat/errors.hpp"

namespace poststrat {

// --- FactorSpec / CellGrid -------------------------------------------------

void FactorSpec::validate() const {
  if (name.empty()) throw ConfigError("factor with empty name");
  if (levels.empty()) throw ConfigError("factor '" + name + "' has no levels");
  std::set<std::string> seen;
  for (const auto& level : levels) {
    if (!seen.insert(level).second) {
      throw ConfigError("factor '" + name + "' has duplicate level '" + level + "'");
    }
  }
  if (baseline >= levels.size()) {
    throw ConfigError("factor '" + name + "' baseline index out of range");
  }
}

std::optional<std::size_t> FactorSpec::level_index(std::string_view label) const {
  for (std::size_t l = 0; l < levels.size(); ++l) {
    if (levels[l] == label) return l;
  }
  return std::nullopt;
}

CellGrid::CellGrid(std::vector<FactorSpec> factors) : factors_(std::move(factors)) {
  std::set<std::string> names;
  for (const auto& f : factors_) {
    f.validate();
    if (!names.insert(f.name).second) throw ConfigError("duplicate factor '" + f.name + "'");
  }
  strides_.assign(factors_.size(), 1);
  size_ = 1;
  for (std::size_t f = factors_.size(); f-- > 0;) {
    strides_[f] = size_;
    size_ *= factors_[f].levels.size();
  }
}

std::optional<std::size_t> CellGrid::find_factor(std::string_view name) const {
  for (std::size_t f = 0; f < factors_.size(); ++f) {
    if (factors_[f].name == name) return f;
  }
  return std::nullopt;
}

std::size_t CellGrid::factor_index(std::string_view name) const {
  if (auto f = find_factor(name)) return *f;
  throw ConfigError("unknown factor '" + std::string(name) + "'");
}

std::size_t CellGrid::cell_index(std::span<const std::size_t> levels) const {
  std::size_t j = 0;
  for (std::size_t f = 0; f < factors_.size(); ++f) j += levels[f] * strides_[f];
  return j;
}

std::size_t CellGrid::level_of(std::size_t cell, std::size_t factor) const {
  return (cell / strides_[factor]) % factors_[factor].levels.size();
}

std::vector<std::size_t> CellGrid::cell_levels(std::size_t cell) const {
  std::vector<std::size_t> out(factors_.size());
  for (std::size_t f = 0; f < factors_.size(); ++f) out[f] = level_of(cell, f);
  return out;
}

std::vector<std::string> CellGrid::cell_labels(std::size_t cell) const {
  std::vector<std::string> out(factors_.size());
  for (std::size_t f = 0; f < factors_.size(); ++f) out[f] = factors_[f].levels[level_of(cell, f)];
  return out;
}

std::string CellGrid::cell_name(std::size_t cell) const {
  std::string out;
  for (const auto& label : cell_labels(cell)) {
    if (!out.empty()) out += ':';
    out += label;
  }
  return out.empty() ? "(all)" : out;
}

// --- SurveyDataset ---------------------------------------------------------

SurveyDataset::SurveyDataset(std::vector<FactorSpec> factors,
                             std::vector<std::vector<std::size_t>> level_codes,
                             std::vector<OutcomeColumn> outcomes,
                             std::optional<std::vector<double>> weights,
                             std::optional<std::vector<int>> waves, std::vector<std::string> ids)
    : factors_(std::move(factors)),
      codes_(std::move(level_codes)),
      outcomes_(std::move(outcomes)),
      weights_(std::move(weights)),
      waves_(std::move(waves)),
      ids_(std::move(ids)) {
  if (codes_.size() != factors_.size()) {
    throw DataError("dataset: one level column required per factor");
  }
  std::set<std::string> names;
  for (const auto& f : factors_) {
    f.validate();
    if (!names.insert(f.name).second) throw ConfigError("duplicate factor '" + f.name + "'");
  }

  // n comes from whichever column is present.
  if (!codes_.empty()) {
    size_ = codes_.front().size();
  } else if (!outcomes_.empty()) {
    size_ = outcomes_.front().values.size();
  } else if (weights_) {
    size_ = weights_->size();
  }
  if (size_ == 0) throw DataError("dataset: no respondents");

  for (std::size_t f = 0; f < factors_.size(); ++f) {
    if (codes_[f].size() != size_) throw DataError("dataset: ragged factor column '" + factors_[f].name + "'");
    for (std::size_t i = 0; i < size_; ++i) {
      if (codes_[f][i] >= factors_[f].levels.size()) {
        throw DataError("row " + std::to_string(i + 1) + ": invalid level for factor '" +
                        factors_[f].name + "'");
      }
    }
  }
  for (const auto& col : outcomes_) {
    if (col.values.size() != size_) throw DataError("dataset: ragged outcome column '" + col.name + "'");
    for (std::size_t i = 0; i < size_; ++i) {
      const double v = col.values[i];
      if (std::isnan(v)) continue;
      if (!std::isfinite(v)) {
        throw DataError("row " + std::to_string(i + 1) + ": non-finite value for '" + col.name + "'");
      }
      if (col.binary && v != 0.0 && v != 1.0) {
        throw DataError("row " + std::to_string(i + 1) + ": binary outcome '" + col.name +
                        "' must be 0 or 1");
      }
    }
  }
  if (weights_) {
    if (weights_->size() != size_) throw DataError("dataset: weight column has wrong length");
    for (std::size_t i = 0; i < size_; ++i) {
      const double w = (*weights_)[i];
      if (!std::isfinite(w) || w < 0.0) {
        throw DataError("row " + std::to_string(i + 1) + ": weight must be finite and non-negative");
      }
    }
  }
  if (waves_) {
    if (waves_->size() != size_) throw DataError("dataset: wave column has wrong length");
    for (std::size_t i = 0; i < size_; ++i) {
      if ((*waves_)[i] != 0 && (*waves_)[i] != 1) {
        throw DataError("row " + std::to_string(i + 1) + ": wave must be 0 or 1");
      }
    }
  }
  if (!ids_.empty() && ids_.size() != size_) throw DataError("dataset: id column has wrong length");
}

const FactorSpec& SurveyDataset::factor(std::string_view name) const {
  for (const auto& f : factors_) {
    if (f.name == name) return f;
  }
  throw ConfigError("dataset has no factor '" + std::string(name) + "'");
}

std::span<const std::size_t> SurveyDataset::levels(std::string_view factor) const {
  for (std::size_t f = 0; f < factors_.size(); ++f) {
    if (factors_[f].name == factor) return codes_[f];
  }
  throw ConfigError("dataset has no factor '" + std::string(factor) + "'");
}

const OutcomeColumn& SurveyDataset::outcome(std::string_view name) const {
  for (const auto& col : outcomes_) {
    if (col.name == name) return col;
  }
  throw ConfigError("dataset has no outcome '" + std::string(name) + "'");
}

bool SurveyDataset::has_outcome(std::string_view name) const {
  return std::any_of(outcomes_.begin(), outcomes_.end(),
                     [&](const OutcomeColumn& c) { return c.name == name; });
}

std::span<const double> SurveyDataset::weights() const {
  if (!weights_) throw DataError("dataset carries no weights");
  return *weights_;
}

std::span<const int> SurveyDataset::waves() const {
  if (!waves_) throw DataError("dataset carries no wave indicator");
  return *waves_;
}

std::vector<std::size_t> SurveyDataset::complete_rows(std::string_view name) const {
  const auto& values = outcome(name).values;
  std::vector<std::size_t> rows;
  rows.reserve(size_);
  for (std::size_t i = 0; i < size_; ++i) {
    if (!std::isnan(values[i])) rows.push_back(i);
  }
  return rows;
}

SurveyDataset SurveyDataset::complete_cases(std::string_view name) const {
  const auto rows = complete_rows(name);
  if (rows.size() == size_) return *this;
  return subset(rows);
}

SurveyDataset SurveyDataset::subset(std::span<const std::size_t> rows) const {
  auto pick = [&](const auto& column) {
    std::remove_cvref_t<decltype(column)> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(column[r]);
    return out;
  };
  for (std::size_t r : rows) {
    if (r >= size_) throw DataError("dataset subset: row index out of range");
  }
  std::vector<std::vector<std::size_t>> codes;
  codes.reserve(codes_.size());
  for (const auto& c : codes_) codes.push_back(pick(c));
  std::vector<OutcomeColumn> outcomes;
  outcomes.reserve(outcomes_.size());
  for (const auto& o : outcomes_) outcomes.push_back({o.name, o.binary, pick(o.values)});
  std::optional<std::vector<double>> weights;
  if (weights_) weights = pick(*weights_);
  std::optional<std::vector<int>> waves;
  if (waves_) waves = pick(*waves_);
  std::vector<std::string> ids;
  if (!ids_.empty()) ids = pick(ids_);
  return SurveyDataset(factors_, std::move(codes), std::move(outcomes), std::move(weights),
                       std::move(waves), std::move(ids));
}

SurveyDataset SurveyDataset::without_row(std::size_t row) const {
  std::vector<std::size_t> rows;
  rows.reserve(size_ - 1);
  for (std::size_t i = 0; i < size_; ++i) {
    if (i != row) rows.push_back(i);
  }
  return subset(rows);
}

SurveyDataset SurveyDataset::with_weights(std::vector<double> weights) const {
  return SurveyDataset(factors_, codes_, outcomes_, std::move(weights), waves_, ids_);
}

SurveyDataset SurveyDataset::wave(int z) const {
  if (!waves_) throw DataError("dataset carries no wave indicator");
  const auto& w = *waves_;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size_; ++i) {
    if (w[i] == z) rows.push_back(i);
  }
  if (rows.empty()) throw DataError("wave " + std::to_string(z) + " has no respondents");
  return subset(rows);
}

// --- PoststratTable --------------------------------------------------------

PoststratTable::PoststratTable(CellGrid grid, std::vector<std::size_t> sample_counts)
    : grid_(std::move(grid)), sample_counts_(std::move(sample_counts)) {
  if (sample_counts_.size() != grid_.size()) {
    throw DataError("poststratification table: sample counts do not cover the cell grid");
  }
  sample_size_ = std::accumulate(sample_counts_.begin(), sample_counts_.end(), std::size_t{0});
}

std::span<const double> PoststratTable::population() const {
  if (population_.empty()) throw DataError("population counts have not been attached");
  return population_;
}

PoststratTable PoststratTable::with_population(std::vector<double> counts) const {
  if (counts.size() != grid_.size()) {
    throw DataError("population counts: expected " + std::to_string(grid_.size()) + " cells, got " +
                    std::to_string(counts.size()));
  }
  double total = 0.0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (!std::isfinite(counts[j]) || counts[j] < 0.0) {
      throw DataError("population count for cell " + grid_.cell_name(j) +
                      " must be finite and non-negative");
    }
    total += counts[j];
  }
  if (!(total > 0.0)) throw DataError("population counts sum to zero");
  PoststratTable out = *this;
  out.population_ = std::move(counts);
  out.population_total_ = total;
  return out;
}

// --- cell assignment -------------------------------------------------------

CellAssignment assign_cells(const SurveyDataset& dataset, const std::vector<FactorSpec>& factors) {
  CellGrid grid(factors);
  const std::size_t n = dataset.size();

  // Map each dataset level index to the supplied spec's index, by label.
  std::vector<std::span<const std::size_t>> codes;
  std::vector<std::vector<std::optional<std::size_t>>> remap;
  for (const auto& f : factors) {
    const FactorSpec& own = dataset.factor(f.name);
    codes.push_back(dataset.levels(f.name));
    std::vector<std::optional<std::size_t>> m(own.levels.size());
    for (std::size_t l = 0; l < own.levels.size(); ++l) m[l] = f.level_index(own.levels[l]);
    remap.push_back(std::move(m));
  }

  std::vector<std::size_t> cell_of(n);
  std::vector<std::size_t> counts(grid.size(), 0);
  std::vector<std::size_t> levels(factors.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t f = 0; f < factors.size(); ++f) {
      const auto mapped = remap[f][codes[f][i]];
      if (!mapped) {
        const auto& own = dataset.factor(factors[f].name);
        throw DataError("row " + std::to_string(i + 1) + ": level '" + own.levels[codes[f][i]] +
                        "' of factor '" + factors[f].name + "' is not a declared level");
      }
      levels[f] = *mapped;
    }
    cell_of[i] = grid.cell_index(levels);
    ++counts[cell_of[i]];
  }
  return {PoststratTable(std::move(grid), std::move(counts)), std::move(cell_of)};
}

CellAssignment assign_cells(const SurveyDataset& dataset, const std::vector<std::string>& factor_names) {
  std::vector<FactorSpec> specs;
  specs.reserve(factor_names.size());
  for (const auto& name : factor_names) specs.push_back(dataset.factor(name));
  return assign_cells(dataset, specs);
}

// --- population counts -----------------------------------------------------

PoststratTable attach_population(const PoststratTable& table, const PopulationCounts& counts) {
  const CellGrid& grid = table.grid();
  if (counts.keys.size() != counts.counts.size()) {
    throw DataError("population counts: keys and counts differ in length");
  }
  if (counts.factor_names.size() != grid.factor_count()) {
    throw DataError("population counts are keyed by " + std::to_string(counts.factor_names.size()) +
                    " factors, table has " + std::to_string(grid.factor_count()));
  }
  // position in counts key -> grid factor
  std::vector<std::size_t> order(grid.factor_count());
  for (std::size_t k = 0; k < counts.factor_names.size(); ++k) {
    const auto f = grid.find_factor(counts.factor_names[k]);
    if (!f) throw DataError("population counts keyed by unknown factor '" + counts.factor_names[k] + "'");
    order[k] = *f;
  }

  std::vector<double> N(grid.size(), 0.0);
  std::vector<bool> seen(grid.size(), false);
  std::vector<std::size_t> levels(grid.factor_count());
  for (std::size_t r = 0; r < counts.keys.size(); ++r) {
    const auto& key = counts.keys[r];
    if (key.size() != order.size()) throw DataError("population counts: malformed key");
    for (std::size_t k = 0; k < key.size(); ++k) {
      const auto& spec = grid.factors()[order[k]];
      const auto l = spec.level_index(key[k]);
      if (!l) {
        throw DataError("population counts row " + std::to_string(r + 1) + ": level '" + key[k] +
                        "' not in factor '" + spec.name + "'");
      }
      levels[order[k]] = *l;
    }
    const std::size_t j = grid.cell_index(levels);
    if (seen[j]) throw DataError("population counts: duplicate entry for cell " + grid.cell_name(j));
    if (counts.counts[r] < 0.0 || !std::isfinite(counts.counts[r])) {
      throw DataError("population counts: negative or non-finite count for cell " + grid.cell_name(j));
    }
    seen[j] = true;
    N[j] = counts.counts[r];
  }

  std::string missing;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (!seen[j]) missing += (missing.empty() ? "" : ", ") + grid.cell_name(j);
  }
  if (!missing.empty()) throw DataError("population counts missing for cells: " + missing);
  return table.with_population(std::move(N));
}

PopulationCounts population_counts(const CellGrid& grid, std::span<const double> counts) {
  PopulationCounts out;
  for (const auto& f : grid.factors()) out.factor_names.push_back(f.name);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    out.keys.push_back(grid.cell_labels(j));
    out.counts.push_back(counts[j]);
  }
  return out;
}

// --- CSV -------------------------------------------------------------------

SurveyDataset read_survey_csv(std::istream& in, const SurveySchema& schema) {
  const csv::Table table = csv::read(in);
  const std::size_t n = table.rows.size();
  if (n == 0) throw DataError("survey csv has no data rows");

  std::vector<FactorSpec> factors;
  std::vector<std::vector<std::size_t>> codes;
  for (const auto& declared : schema.factors) {
    const std::size_t c = table.require_column(declared.name);
    FactorSpec spec = declared;
    if (spec.levels.empty()) {
      std::set<std::string> distinct;
      for (const auto& row : table.rows) distinct.insert(row[c]);
      spec.levels.assign(distinct.begin(), distinct.end());
    }
    spec.validate();
    std::map<std::string, std::size_t> index;
    for (std::size_t l = 0; l < spec.levels.size(); ++l) index.emplace(spec.levels[l], l);
    std::vector<std::size_t> column(n);
    for (std::size_t r = 0; r < n; ++r) {
      const auto it = index.find(table.rows[r][c]);
      if (it == index.end()) {
        throw DataError("row " + std::to_string(r + 1) + ": level '" + table.rows[r][c] +
                        "' of factor '" + spec.name + "' is not a declared level");
      }
      column[r] = it->second;
    }
    factors.push_back(std::move(spec));
    codes.push_back(std::move(column));
  }

  std::vector<OutcomeColumn> outcomes;
  for (const auto& name : schema.outcomes) {
    const std::size_t c = table.require_column(name);
    OutcomeColumn col{name, true, std::vector<double>(n)};
    for (std::size_t r = 0; r < n; ++r) {
      const auto v = csv::parse_number(table.rows[r][c], r + 1, name);
      col.values[r] = v ? *v : std::numeric_limits<double>::quiet_NaN();
      if (v && *v != 0.0 && *v != 1.0) col.binary = false;
    }
    outcomes.push_back(std::move(col));
  }

  std::optional<std::vector<double>> weights;
  if (const auto c = table.column("weight")) {
    weights.emplace(n);
    for (std::size_t r = 0; r < n; ++r) {
      const auto v = csv::parse_number(table.rows[r][*c], r + 1, "weight");
      if (!v || !(*v > 0.0)) {
        throw DataError("row " + std::to_string(r + 1) + ": weight must be a positive number");
      }
      (*weights)[r] = *v;
    }
  }
  std::optional<std::vector<int>> waves;
  if (const auto c = table.column("wave")) {
    waves.emplace(n);
    for (std::size_t r = 0; r < n; ++r) {
      const auto& field = table.rows[r][*c];
      if (field != "0" && field != "1") {
        throw DataError("row " + std::to_string(r + 1) + ": wave must be 0 or 1, got '" + field + "'");
      }
      (*waves)[r] = field == "1" ? 1 : 0;
    }
  }
  std::vector<std::string> ids;
  if (const auto c = table.column("id")) {
    ids.reserve(n);
    for (const auto& row : table.rows) ids.push_back(row[*c]);
  }
  return SurveyDataset(std::move(factors), std::move(codes), std::move(outcomes), std::move(weights),
                       std::move(waves), std::move(ids));
}

SurveyDataset read_survey_csv_file(const std::string& path, const SurveySchema& schema) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open survey file '" + path + "'");
  return read_survey_csv(in, schema);
}

void write_survey_csv(std::ostream& out, const SurveyDataset& dataset) {
  std::vector<std::string> header;
  const bool ids = !dataset.ids().empty();
  if (ids) header.push_back("id");
  for (const auto& f : dataset.factors()) header.push_back(f.name);
  for (const auto& o : dataset.outcomes()) header.push_back(o.name);
  if (dataset.has_weights()) header.push_back("weight");
  if (dataset.has_waves()) header.push_back("wave");
  csv::write_row(out, header);

  std::vector<std::string> row;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    row.clear();
    if (ids) row.push_back(dataset.ids()[i]);
    for (std::size_t f = 0; f < dataset.factors().size(); ++f) {
      row.push_back(dataset.factors()[f].levels[dataset.levels(f)[i]]);
    }
    for (const auto& o : dataset.outcomes()) {
      row.push_back(std::isnan(o.values[i]) ? std::string() : csv::format_number(o.values[i]));
    }
    if (dataset.has_weights()) row.push_back(csv::format_number(dataset.weights()[i]));
    if (dataset.has_waves()) row.push_back(std::to_string(dataset.waves()[i]));
    csv::write_row(out, row);
  }
}

PopulationCounts read_population_csv(std::istream& in) {
  const csv::Table table = csv::read(in);
  const std::size_t count_col = table.require_column("N");
  PopulationCounts out;
  std::vector<std::size_t> key_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == count_col) continue;
    key_cols.push_back(c);
    out.factor_names.push_back(table.header[c]);
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    std::vector<std::string> key;
    for (std::size_t c : key_cols) key.push_back(table.rows[r][c]);
    const auto v = csv::parse_number(table.rows[r][count_col], r + 1, "N");
    if (!v) throw DataError("population counts row " + std::to_string(r + 1) + ": missing N");
    if (*v < 0.0) throw DataError("population counts row " + std::to_string(r + 1) + ": negative N");
    out.keys.push_back(std::move(key));
    out.counts.push_back(*v);
  }
  return out;
}

PopulationCounts read_population_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open population file '" + path + "'");
  return read_population_csv(in);
}

void write_population_csv(std::ostream& out, const PopulationCounts& counts) {
  std::vector<std::string> header = counts.factor_names;
  header.push_back("N");
  csv::write_row(out, header);
  for (std::size_t r = 0; r < counts.keys.size(); ++r) {
    std::vector<std::string> row = counts.keys[r];
    row.push_back(csv::format_number(counts.counts[r]));
    csv::write_row(out, row);
  }
}

}  // namespace poststrat
