#include "poststrat/weights.hpp"

#include <ostream>

#include "poststrat/csv.hpp"
#include "poststrat/errors.hpp"

namespace poststrat {

const char* weight_source_name(WeightSource source) {
  switch (source) {
    case WeightSource::unit: return "unit";
    case WeightSource::given: return "given";
    case WeightSource::full_poststrat: return "full_poststrat";
    case WeightSource::classical_regression: return "classical";
    case WeightSource::hierarchical_regression: return "hierarchical";
    case WeightSource::raking: return "raking";
    case WeightSource::factor_rules: return "factor_rules";
  }
  return "unknown";
}

bool is_projection_source(WeightSource source) {
  return source == WeightSource::unit || source == WeightSource::full_poststrat ||
         source == WeightSource::classical_regression;
}

Eigen::VectorXd WeightVector::cell_totals(const Eigen::VectorXd& n_cell) const {
  if (cell.size() != n_cell.size()) throw DataError("cell weights do not match the cell count vector");
  return cell.cwiseProduct(n_cell);
}

WeightVector unit_weights(std::size_t n) {
  WeightVector w;
  w.unit = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
  w.normalization = Normalization::sum_to_n;
  w.source = WeightSource::unit;
  return w;
}

WeightVector normalized_to_n(WeightVector w) {
  const double total = w.unit.sum();
  if (!(total > 0.0)) throw DataError("weights sum to zero; cannot normalize");
  const double scale = static_cast<double>(w.unit.size()) / total;
  w.unit *= scale;
  if (w.cell.size()) w.cell *= scale;
  w.normalization = Normalization::sum_to_n;
  return w;
}

WeightVector given_weights(const SurveyDataset& dataset) {
  const auto src = dataset.weights();
  WeightVector w;
  w.unit = Eigen::Map<const Eigen::VectorXd>(src.data(), static_cast<Eigen::Index>(src.size()));
  w.source = WeightSource::given;
  return w;
}

const char* se_method_name(SEMethod method) {
  switch (method) {
    case SEMethod::srs: return "srs";
    case SEMethod::fixed_weight: return "fixed_weight";
    case SEMethod::inverse_probability: return "inverse_probability";
    case SEMethod::model_based: return "model_based";
    case SEMethod::jackknife_cells: return "jackknife_cells";
  }
  return "unknown";
}

SEMethod parse_se_method(std::string_view text) {
  for (SEMethod m : all_se_methods()) {
    if (text == se_method_name(m)) return m;
  }
  throw ConfigError("unknown SE method '" + std::string(text) + "'");
}

std::vector<SEMethod> all_se_methods() {
  return {SEMethod::srs, SEMethod::fixed_weight, SEMethod::inverse_probability, SEMethod::model_based,
          SEMethod::jackknife_cells};
}

void write_unit_weights_csv(std::ostream& out, const WeightVector& w, const std::vector<std::string>& ids,
                            const std::vector<std::size_t>& cell_of) {
  csv::write_row(out, {"id", "cell", "weight"});
  for (Eigen::Index i = 0; i < w.unit.size(); ++i) {
    const auto u = static_cast<std::size_t>(i);
    csv::write_row(out, {ids.empty() ? std::to_string(u + 1) : ids[u],
                         cell_of.empty() ? std::string() : std::to_string(cell_of[u] + 1),
                         csv::format_number(w.unit(i))});
  }
}

void write_cell_weights_csv(std::ostream& out, const WeightVector& w, const PoststratTable& table) {
  const CellGrid& grid = table.grid();
  if (w.cell.size() && static_cast<std::size_t>(w.cell.size()) != grid.size()) {
    throw DataError("cell weights cover " + std::to_string(w.cell.size()) + " cells, the table has " +
                    std::to_string(grid.size()));
  }
  std::vector<std::string> header{"cell"};
  for (const auto& f : grid.factors()) header.push_back(f.name);
  header.insert(header.end(), {"N", "n", "weight"});
  csv::write_row(out, header);
  for (std::size_t j = 0; j < grid.size(); ++j) {
    std::vector<std::string> row{std::to_string(j + 1)};
    for (auto& label : grid.cell_labels(j)) row.push_back(std::move(label));
    row.push_back(table.has_population() ? csv::format_number(table.population()[j]) : std::string());
    row.push_back(std::to_string(table.sample_counts()[j]));
    row.push_back(w.cell.size() ? csv::format_number(w.cell(static_cast<Eigen::Index>(j))) : std::string());
    csv::write_row(out, row);
  }
}

}  // namespace poststrat
