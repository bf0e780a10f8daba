#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "poststrat/errors.hpp"
#include "poststrat/survey_data.hpp"
#include "poststrat/weights.hpp"

namespace poststrat {

/// Target totals for a one-way margin or a two-way (factor pair) margin.
/// Targets may be counts or proportions (summing to 1).
struct MarginSpec {
  std::vector<std::string> factors;
  std::vector<std::vector<std::string>> keys;  // one label per factor, per entry
  std::vector<double> targets;
  double tolerance = 1e-8;

  static MarginSpec one_way(std::string factor, const std::vector<std::pair<std::string, double>>& targets);
  std::string name() const;
  double total() const;
  bool is_proportion() const;
  void validate() const;
};

/// Sample-independent multiplier per level of one factor.
struct FactorWeightRule {
  std::string factor;
  std::map<std::string, double> multipliers;
  void validate() const;
};

struct IpfOptions {
  int max_sweeps = 1000;
};

struct IpfResult {
  Eigen::VectorXd table;
  int sweeps = 0;
  bool converged = false;
  /// Max relative discrepancy of the seed, then after each sweep.
  std::vector<double> discrepancy;
  /// Final discrepancy per margin, in margin order.
  std::vector<double> margin_discrepancy;
};

class IpfError : public NumericalError {
 public:
  IpfError(const std::string& message, IpfResult result)
      : NumericalError(message), result_(std::move(result)) {}
  const IpfResult& result() const { return result_; }

 private:
  IpfResult result_;
};

/// Iterative proportional fitting of `seed` (on `grid`) to the margins,
/// applied in the given order each sweep. Zero seed cells stay zero.
/// Proportion margins are scaled to the common total of the count margins,
/// or to the seed total when every margin is a proportion.
/// Throws DataError for inconsistent totals or margins unattainable given
/// the zeros, IpfError when max_sweeps is reached.
IpfResult ipf(const CellGrid& grid, const Eigen::VectorXd& seed, const std::vector<MarginSpec>& margins,
              const IpfOptions& options = {});

/// Rakes `initial` so the weighted sample margins match the target
/// proportions; the result sums to n.
WeightVector rake_weights(const CellAssignment& cells, const std::vector<MarginSpec>& margins,
                          const WeightVector& initial, const IpfOptions& options = {});

/// Π_rules multiplier(level_i), before normalization.
Eigen::VectorXd factor_multipliers(const SurveyDataset& dataset, const std::vector<FactorWeightRule>& rules);
/// factor_multipliers normalized to sum to n.
WeightVector factor_weights(const SurveyDataset& dataset, const std::vector<FactorWeightRule>& rules);

/// Margins CSV with columns factor, level, target. Two-way margins use
/// "a:b" in the factor column and "x:y" in the level column.
std::vector<MarginSpec> read_margins_csv(std::istream& in);
std::vector<MarginSpec> read_margins_csv_file(const std::string& path);
void write_margins_csv(std::ostream& out, const std::vector<MarginSpec>& margins);

}  // namespace poststrat
