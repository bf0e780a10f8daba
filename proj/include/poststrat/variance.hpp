#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "poststrat/procedure.hpp"
#include "poststrat/survey_data.hpp"
#include "poststrat/weights.hpp"

namespace poststrat {

/// The three expressions for the variance of a poststratified estimate with
/// cell-constant weights and known residual sd σ_y:
///   unit   (1/n²) Σ_i w_i² σ_y²
///   cell   (1/n²) Σ_j (w_j^POP)² n_j σ_y²
///   mixed  (1/(nN)) Σ_j w_j^POP N_j σ_y²
struct VarianceForms {
  double unit = 0.0;
  double cell = 0.0;
  double mixed = 0.0;
};

inline constexpr double kVarianceFormTolerance = 1e-9;

/// Evaluates all three forms. Cell weights are taken from `w.cell` when
/// present, otherwise read off the unit weights. Throws DataError if unit
/// weights are not constant within cells.
VarianceForms model_variance_forms(const WeightVector& w, const CellAssignment& cells, double sigma_y);

/// The unit form, after checking unit == cell always and unit == mixed for
/// projection weights (unit, full poststratification, classical regression),
/// each to kVarianceFormTolerance relative. Throws DataError on disagreement.
double model_based_variance(const WeightVector& w, const CellAssignment& cells, double sigma_y);

/// Pooled within-cell residual sd sqrt(Σ (y_i − ȳ_j(i))² / (n − J_occupied)).
double pooled_within_cell_sd(const Eigen::VectorXd& y, const CellAssignment& cells);

/// s/√n with s the sample sd.
double se_srs(const Eigen::VectorXd& y);
/// SE of Σw_iy_i/Σw_i with the weights held fixed: s_w √(Σw_i²) / Σw_i,
/// s_w² = Σ(y_i − ȳ_w)² / (n − 1).
double se_fixed_weight(const Eigen::VectorXd& y, const Eigen::VectorXd& w);
/// Ratio-estimator SE with w_i ∝ 1/π_i:
/// √(n/(n−1) Σ w_i² (y_i − ȳ_w)²) / Σw_i.
double se_invprob(const Eigen::VectorXd& y, const Eigen::VectorXd& w);

struct JackknifeOptions {
  unsigned threads = 1;
};

/// Delete-one jackknife that replays `procedure` on every replicate:
/// √((n−1)/n Σ_i (θ_(i) − θ̄)²). Throws DataError naming any occupied cell of
/// the procedure's factors with a single respondent.
double jackknife_cells_se(const SurveyDataset& dataset, const WeightingProcedure& procedure,
                          const Estimand& estimand, const JackknifeOptions& options = {});

struct SERow {
  std::string estimand;
  SEMethod method;
  double se = 0.0;
};

/// SE report CSV: estimand, method, se.
void write_se_csv(std::ostream& out, const std::vector<SERow>& rows);

}  // namespace poststrat
