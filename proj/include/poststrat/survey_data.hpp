#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace poststrat {

/// A categorical adjustment variable. `baseline` indexes the level dropped
/// under classical (treatment) coding.
struct FactorSpec {
  std::string name;
  std::vector<std::string> levels;
  std::size_t baseline = 0;

  /// Throws ConfigError if levels are empty/duplicated or baseline is out of range.
  void validate() const;
  std::optional<std::size_t> level_index(std::string_view label) const;
};

/// Full cross-classification of a list of factors. Cells are numbered
/// row-major: the last factor varies fastest.
class CellGrid {
 public:
  CellGrid() = default;
  explicit CellGrid(std::vector<FactorSpec> factors);

  const std::vector<FactorSpec>& factors() const { return factors_; }
  std::size_t size() const { return size_; }
  std::size_t factor_count() const { return factors_.size(); }

  std::optional<std::size_t> find_factor(std::string_view name) const;
  std::size_t factor_index(std::string_view name) const;

  std::size_t cell_index(std::span<const std::size_t> levels) const;
  std::size_t level_of(std::size_t cell, std::size_t factor) const;
  std::vector<std::size_t> cell_levels(std::size_t cell) const;
  std::vector<std::string> cell_labels(std::size_t cell) const;
  /// Labels joined with ':' ("F:black").
  std::string cell_name(std::size_t cell) const;

 private:
  std::vector<FactorSpec> factors_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 1;
};

struct OutcomeColumn {
  std::string name;
  bool binary = false;
  std::vector<double> values;  // NaN marks a missing response
};

/// Respondent-level survey data. Factor levels are stored as indices into
/// the corresponding FactorSpec. Immutable once constructed.
class SurveyDataset {
 public:
  SurveyDataset(std::vector<FactorSpec> factors,
                std::vector<std::vector<std::size_t>> level_codes,
                std::vector<OutcomeColumn> outcomes,
                std::optional<std::vector<double>> weights = std::nullopt,
                std::optional<std::vector<int>> waves = std::nullopt,
                std::vector<std::string> ids = {});

  std::size_t size() const { return size_; }
  const std::vector<FactorSpec>& factors() const { return factors_; }
  const FactorSpec& factor(std::string_view name) const;
  std::span<const std::size_t> levels(std::string_view factor) const;
  std::span<const std::size_t> levels(std::size_t factor) const { return codes_[factor]; }

  const std::vector<OutcomeColumn>& outcomes() const { return outcomes_; }
  const OutcomeColumn& outcome(std::string_view name) const;
  bool has_outcome(std::string_view name) const;

  bool has_weights() const { return weights_.has_value(); }
  std::span<const double> weights() const;
  bool has_waves() const { return waves_.has_value(); }
  std::span<const int> waves() const;
  const std::vector<std::string>& ids() const { return ids_; }

  /// Rows whose value for `outcome` is present.
  std::vector<std::size_t> complete_rows(std::string_view outcome) const;
  /// Complete-case view for one outcome (missing responses dropped).
  SurveyDataset complete_cases(std::string_view outcome) const;

  SurveyDataset subset(std::span<const std::size_t> rows) const;
  SurveyDataset without_row(std::size_t row) const;
  SurveyDataset with_weights(std::vector<double> weights) const;
  /// Respondents of wave z (requires a wave column).
  SurveyDataset wave(int z) const;

 private:
  std::vector<FactorSpec> factors_;
  std::vector<std::vector<std::size_t>> codes_;
  std::vector<OutcomeColumn> outcomes_;
  std::optional<std::vector<double>> weights_;
  std::optional<std::vector<int>> waves_;
  std::vector<std::string> ids_;
  std::size_t size_ = 0;
};

/// Poststratification cells with sample counts n_j and, once attached,
/// real-valued population counts N_j.
class PoststratTable {
 public:
  PoststratTable(CellGrid grid, std::vector<std::size_t> sample_counts);

  const CellGrid& grid() const { return grid_; }
  std::size_t cells() const { return grid_.size(); }
  std::span<const std::size_t> sample_counts() const { return sample_counts_; }
  std::size_t sample_size() const { return sample_size_; }

  bool has_population() const { return !population_.empty(); }
  std::span<const double> population() const;
  double population_total() const { return population_total_; }

  /// Copy with N_j set. Throws DataError on negative, non-finite or all-zero counts.
  PoststratTable with_population(std::vector<double> counts) const;

 private:
  CellGrid grid_;
  std::vector<std::size_t> sample_counts_;
  std::size_t sample_size_ = 0;
  std::vector<double> population_;
  double population_total_ = 0.0;
};

struct CellAssignment {
  PoststratTable table;
  std::vector<std::size_t> cell_of;  // j(i) for each respondent
};

/// Cross-classifies respondents by `factors`. Levels are matched by label, so
/// the supplied specs may order levels differently from the dataset's own.
CellAssignment assign_cells(const SurveyDataset& dataset, const std::vector<FactorSpec>& factors);
/// Same, using the dataset's own specs for the named factors.
CellAssignment assign_cells(const SurveyDataset& dataset, const std::vector<std::string>& factor_names);

/// External population counts keyed by factor-level labels.
struct PopulationCounts {
  std::vector<std::string> factor_names;
  std::vector<std::vector<std::string>> keys;  // one label per factor
  std::vector<double> counts;
};

PoststratTable attach_population(const PoststratTable& table, const PopulationCounts& counts);

PopulationCounts population_counts(const CellGrid& grid, std::span<const double> counts);

// --- CSV interfaces --------------------------------------------------------

struct SurveySchema {
  /// Factor columns. Specs with empty `levels` take the sorted distinct labels
  /// found in the file.
  std::vector<FactorSpec> factors;
  std::vector<std::string> outcomes;
};

/// Reads a survey CSV. Optional columns: `id`, `weight` (positive), `wave` (0/1).
SurveyDataset read_survey_csv(std::istream& in, const SurveySchema& schema);
SurveyDataset read_survey_csv_file(const std::string& path, const SurveySchema& schema);
void write_survey_csv(std::ostream& out, const SurveyDataset& dataset);

/// Population counts CSV: one column per factor plus `N`. Every column other
/// than `N` is read as a key column.
PopulationCounts read_population_csv(std::istream& in);
PopulationCounts read_population_csv_file(const std::string& path);
void write_population_csv(std::ostream& out, const PopulationCounts& counts);

}  // namespace poststrat
