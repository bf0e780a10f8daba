#include "poststrat/variance.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <ostream>
#include <thread>

#include "poststrat/csv.hpp"

namespace poststrat {

namespace {

bool close(double a, double b) {
  return std::abs(a - b) <= kVarianceFormTolerance * std::max({std::abs(a), std::abs(b), 1e-300});
}

void require_outcome(const Eigen::VectorXd& y, const char* what) {
  if (y.size() < 2) throw DataError(std::string(what) + ": need at least two observations");
  if (!y.allFinite()) throw DataError(std::string(what) + ": outcome has missing or non-finite values");
}

void require_weights(const Eigen::VectorXd& y, const Eigen::VectorXd& w, const char* what) {
  require_outcome(y, what);
  if (w.size() != y.size()) throw DataError(std::string(what) + ": weights and outcome differ in length");
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!(w(i) > 0.0) || !std::isfinite(w(i))) throw DataError(std::string(what) + ": weights must be positive");
  }
}

Eigen::VectorXd cell_weights_of(const WeightVector& w, const CellAssignment& cells) {
  const auto J = static_cast<Eigen::Index>(cells.table.cells());
  if (static_cast<std::size_t>(w.unit.size()) != cells.cell_of.size()) {
    throw DataError("variance: weights do not match the sample");
  }
  Eigen::VectorXd cell;
  std::vector<bool> known(static_cast<std::size_t>(J), false);
  if (w.cell.size()) {
    if (w.cell.size() != J) throw DataError("variance: cell weights do not match the cell table");
    cell = w.cell;
    std::fill(known.begin(), known.end(), true);
  } else {
    cell = Eigen::VectorXd::Zero(J);
  }
  for (std::size_t i = 0; i < cells.cell_of.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(cells.cell_of[i]);
    const double wi = w.unit(static_cast<Eigen::Index>(i));
    if (!known[static_cast<std::size_t>(j)]) {
      cell(j) = wi;
      known[static_cast<std::size_t>(j)] = true;
    } else if (!close(cell(j), wi)) {
      throw DataError("variance: weights are not constant within cell " +
                      cells.table.grid().cell_name(static_cast<std::size_t>(j)));
    }
  }
  return cell;
}

}  // namespace

VarianceForms model_variance_forms(const WeightVector& w, const CellAssignment& cells, double sigma_y) {
  if (!(sigma_y >= 0.0) || !std::isfinite(sigma_y)) throw ConfigError("sigma_y must be finite and non-negative");
  const PoststratTable& table = cells.table;
  if (!table.has_population()) throw DataError("population counts have not been attached");
  const Eigen::VectorXd cell = cell_weights_of(w, cells);
  const double n = static_cast<double>(table.sample_size());
  const double N = table.population_total();
  const double s2 = sigma_y * sigma_y;
  const auto n_j = table.sample_counts();
  const auto N_j = table.population();

  VarianceForms f;
  f.unit = w.unit.squaredNorm() * s2 / (n * n);
  for (std::size_t j = 0; j < table.cells(); ++j) {
    const double c = cell(static_cast<Eigen::Index>(j));
    f.cell += c * c * static_cast<double>(n_j[j]);
    f.mixed += c * N_j[j];
  }
  f.cell *= s2 / (n * n);
  f.mixed *= s2 / (n * N);
  return f;
}

double model_based_variance(const WeightVector& w, const CellAssignment& cells, double sigma_y) {
  const auto f = model_variance_forms(w, cells, sigma_y);
  if (!close(f.unit, f.cell)) {
    throw DataError("variance: unit and cell forms disagree (" + csv::format_number(f.unit) + " vs " +
                    csv::format_number(f.cell) + ")");
  }
  bool mixed_applies = is_projection_source(w.source);
  if (mixed_applies && w.cell.size() == 0) {
    // Without explicit cell weights, populated empty cells have no weight.
    const auto n_j = cells.table.sample_counts();
    const auto N_j = cells.table.population();
    for (std::size_t j = 0; j < n_j.size(); ++j) mixed_applies = mixed_applies && (n_j[j] > 0 || N_j[j] == 0.0);
  }
  if (mixed_applies && !close(f.unit, f.mixed)) {
    throw DataError("variance: unit and population forms disagree for " + std::string(weight_source_name(w.source)) +
                    " weights (" + csv::format_number(f.unit) + " vs " + csv::format_number(f.mixed) + ")");
  }
  return f.unit;
}

double pooled_within_cell_sd(const Eigen::VectorXd& y, const CellAssignment& cells) {
  if (static_cast<std::size_t>(y.size()) != cells.cell_of.size()) {
    throw DataError("pooled sd: outcome does not match the sample");
  }
  if (!y.allFinite()) throw DataError("pooled sd: outcome has missing or non-finite values");
  const auto J = cells.table.cells();
  std::vector<double> sum(J, 0.0);
  std::vector<double> count(J, 0.0);
  for (std::size_t i = 0; i < cells.cell_of.size(); ++i) {
    sum[cells.cell_of[i]] += y(static_cast<Eigen::Index>(i));
    count[cells.cell_of[i]] += 1.0;
  }
  const double occupied = static_cast<double>(std::count_if(count.begin(), count.end(), [](double c) { return c > 0; }));
  const double dof = static_cast<double>(y.size()) - occupied;
  if (!(dof > 0.0)) throw DataError("pooled sd: every respondent is alone in its cell");
  double ss = 0.0;
  for (std::size_t i = 0; i < cells.cell_of.size(); ++i) {
    const auto j = cells.cell_of[i];
    const double r = y(static_cast<Eigen::Index>(i)) - sum[j] / count[j];
    ss += r * r;
  }
  return std::sqrt(ss / dof);
}

double se_srs(const Eigen::VectorXd& y) {
  require_outcome(y, "se_srs");
  const double n = static_cast<double>(y.size());
  const double ss = (y.array() - y.mean()).square().sum();
  return std::sqrt(ss / (n - 1.0) / n);
}

double se_fixed_weight(const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  require_weights(y, w, "se_fixed_weight");
  const double n = static_cast<double>(y.size());
  const double total = w.sum();
  const double mean = w.dot(y) / total;
  const double s2 = (y.array() - mean).square().sum() / (n - 1.0);
  return std::sqrt(s2 * w.squaredNorm()) / total;
}

double se_invprob(const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  require_weights(y, w, "se_invprob");
  const double n = static_cast<double>(y.size());
  const double total = w.sum();
  const double mean = w.dot(y) / total;
  const double ss = (w.array() * (y.array() - mean)).square().sum();
  return std::sqrt(n / (n - 1.0) * ss) / total;
}

double jackknife_cells_se(const SurveyDataset& dataset, const WeightingProcedure& procedure,
                          const Estimand& estimand, const JackknifeOptions& options) {
  const std::size_t n = dataset.size();
  if (n < 2) throw DataError("jackknife: need at least two respondents");
  if (!procedure.cell_factors.empty()) {
    const auto cells = assign_cells(dataset, procedure.cell_factors);
    const auto counts = cells.table.sample_counts();
    for (std::size_t j = 0; j < counts.size(); ++j) {
      if (counts[j] == 1) {
        throw DataError("jackknife: cell " + cells.table.grid().cell_name(j) +
                        " has a single respondent; deleting it would empty the cell");
      }
    }
  }

  std::vector<double> theta(n, 0.0);
  std::vector<std::exception_ptr> errors(n);
  auto replicate = [&](std::size_t i) {
    try {
      const SurveyDataset d = dataset.without_row(i);
      theta[i] = estimand(d, procedure(d));
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) replicate(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += threads) replicate(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  double mean = 0.0;
  for (double v : theta) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : theta) ss += (v - mean) * (v - mean);
  return std::sqrt(static_cast<double>(n - 1) / static_cast<double>(n) * ss);
}

void write_se_csv(std::ostream& out, const std::vector<SERow>& rows) {
  csv::write_row(out, {"estimand", "method", "se"});
  for (const auto& r : rows) csv::write_row(out, {r.estimand, se_method_name(r.method), csv::format_number(r.se)});
}

}  // namespace poststrat
