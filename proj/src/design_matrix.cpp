#include "poststrat/design_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "poststrat/errors.hpp"
#include "poststrat/least_squares.hpp"

namespace poststrat {

const char* coding_name(Coding coding) {
  return coding == Coding::classical ? "classical" : "batch";
}

Coding parse_coding(std::string_view text) {
  if (text == "classical") return Coding::classical;
  if (text == "batch") return Coding::batch;
  throw ConfigError("unknown coding '" + std::string(text) + "' (expected classical or batch)");
}

std::string DesignTerm::name() const {
  std::string out;
  for (const auto& f : factors) {
    if (!out.empty()) out += ':';
    out += f;
  }
  return out;
}

DesignTerm DesignTerm::parse(std::string_view text, Coding coding) {
  DesignTerm term;
  term.coding = coding;
  std::size_t start = 0;
  while (true) {
    const auto colon = text.find(':', start);
    const auto piece = text.substr(start, colon == std::string_view::npos ? text.npos : colon - start);
    if (piece.empty()) throw ConfigError("malformed design term '" + std::string(text) + "'");
    term.factors.emplace_back(piece);
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  return term;
}

void DesignSpec::validate() const {
  std::set<std::set<std::string>> seen;
  for (const auto& term : terms) {
    if (term.factors.empty()) throw ConfigError("design term with no factors");
    std::set<std::string> key(term.factors.begin(), term.factors.end());
    if (key.size() != term.factors.size()) {
      throw ConfigError("design term '" + term.name() + "' names a factor twice");
    }
    if (!seen.insert(key).second) throw ConfigError("duplicate design term '" + term.name() + "'");
  }
}

std::vector<std::string> DesignSpec::factor_names() const {
  std::vector<std::string> out;
  for (const auto& term : terms) {
    for (const auto& f : term.factors) {
      if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
    }
  }
  return out;
}

bool DesignSpec::has_batches() const {
  return std::any_of(terms.begin(), terms.end(),
                     [](const DesignTerm& t) { return t.coding == Coding::batch; });
}

DesignSpec full_factorial(const std::vector<std::string>& factors, Coding coding) {
  DesignSpec spec;
  const std::size_t m = factors.size();
  for (std::size_t order = 1; order <= m; ++order) {
    // subsets of size `order`, lexicographic in position
    std::vector<bool> pick(m, false);
    std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(order), true);
    do {
      DesignTerm term;
      term.coding = coding;
      for (std::size_t f = 0; f < m; ++f) {
        if (pick[f]) term.factors.push_back(factors[f]);
      }
      spec.terms.push_back(std::move(term));
    } while (std::prev_permutation(pick.begin(), pick.end()));
  }
  return spec;
}

DesignSpec cell_batch_design(const std::vector<std::string>& factors) {
  DesignSpec spec;
  if (!factors.empty()) spec.terms.push_back({factors, Coding::batch});
  return spec;
}

bool DesignMatrices::has_intercept() const {
  if (columns() == 0 || column_batch.empty() || column_batch[0] != -1) return false;
  return (X.rows() == 0 || (X.col(0).array() == 1.0).all()) && (X_pop.col(0).array() == 1.0).all();
}

namespace {

struct TermColumns {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> level_combos;  // per column, one level per term factor
};

TermColumns enumerate_columns(const DesignTerm& term, const std::vector<std::size_t>& factor_idx,
                              const CellGrid& grid) {
  TermColumns out;
  const std::size_t m = factor_idx.size();
  std::vector<std::vector<std::size_t>> allowed(m);
  for (std::size_t t = 0; t < m; ++t) {
    const auto& spec = grid.factors()[factor_idx[t]];
    for (std::size_t l = 0; l < spec.levels.size(); ++l) {
      if (term.coding == Coding::batch || l != spec.baseline) allowed[t].push_back(l);
    }
  }
  // odometer over allowed levels, last factor fastest
  std::vector<std::size_t> pos(m, 0);
  if (std::any_of(allowed.begin(), allowed.end(), [](const auto& a) { return a.empty(); })) return out;
  while (true) {
    std::vector<std::size_t> combo(m);
    std::string label;
    for (std::size_t t = 0; t < m; ++t) {
      combo[t] = allowed[t][pos[t]];
      if (t) label += ':';
      label += grid.factors()[factor_idx[t]].levels[combo[t]];
    }
    out.names.push_back(term.name() + "[" + label + "]");
    out.level_combos.push_back(std::move(combo));
    std::size_t t = m;
    while (t > 0) {
      --t;
      if (++pos[t] < allowed[t].size()) break;
      pos[t] = 0;
      if (t == 0) return out;
    }
    if (m == 0) return out;
  }
}

}  // namespace

DesignMatrices population_design(const DesignSpec& spec, const CellGrid& grid) {
  spec.validate();
  const auto J = static_cast<Eigen::Index>(grid.size());

  std::vector<Eigen::VectorXd> cols;
  DesignMatrices out;
  cols.push_back(Eigen::VectorXd::Ones(J));
  out.column_names.push_back("(Intercept)");
  out.column_terms.push_back("(Intercept)");
  out.column_batch.push_back(-1);

  for (const auto& term : spec.terms) {
    std::vector<std::size_t> idx;
    for (const auto& f : term.factors) {
      const auto found = grid.find_factor(f);
      if (!found) throw ConfigError("design term '" + term.name() + "' uses unknown factor '" + f + "'");
      idx.push_back(*found);
    }
    int batch = -1;
    if (term.coding == Coding::batch) {
      batch = static_cast<int>(out.batch_names.size());
      out.batch_names.push_back(term.name());
    }
    const TermColumns tc = enumerate_columns(term, idx, grid);
    for (std::size_t c = 0; c < tc.names.size(); ++c) {
      Eigen::VectorXd col(J);
      for (Eigen::Index j = 0; j < J; ++j) {
        bool on = true;
        for (std::size_t t = 0; t < idx.size() && on; ++t) {
          on = grid.level_of(static_cast<std::size_t>(j), idx[t]) == tc.level_combos[c][t];
        }
        col(j) = on ? 1.0 : 0.0;
      }
      cols.push_back(std::move(col));
      out.column_names.push_back(tc.names[c]);
      out.column_terms.push_back(term.name());
      out.column_batch.push_back(batch);
    }
  }

  out.X_pop.resize(J, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.X_pop.col(static_cast<Eigen::Index>(c)) = cols[c];
  out.X.resize(0, out.X_pop.cols());
  out.n_cell = Eigen::VectorXd::Zero(J);
  return out;
}

DesignMatrices build_design(const DesignSpec& spec, const CellAssignment& cells) {
  const PoststratTable& table = cells.table;
  DesignMatrices out = population_design(spec, table.grid());
  const auto n = static_cast<Eigen::Index>(cells.cell_of.size());
  const Eigen::Index k = out.columns();

  out.cell_of = cells.cell_of;
  out.X.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) out.X.row(i) = out.X_pop.row(static_cast<Eigen::Index>(cells.cell_of[i]));
  for (std::size_t j = 0; j < table.cells(); ++j) {
    out.n_cell(static_cast<Eigen::Index>(j)) = static_cast<double>(table.sample_counts()[j]);
  }
  if (table.has_population()) {
    const auto N = table.population();
    out.N_pop = Eigen::Map<const Eigen::VectorXd>(N.data(), static_cast<Eigen::Index>(N.size()));
  }

  // Collinearity among unpenalized columns is surfaced, term by term.
  std::vector<Eigen::Index> unpenalized;
  for (Eigen::Index c = 0; c < k;) {
    const std::string& term = out.column_terms[static_cast<std::size_t>(c)];
    Eigen::Index end = c;
    while (end < k && out.column_terms[static_cast<std::size_t>(end)] == term) ++end;
    if (out.column_batch[static_cast<std::size_t>(c)] == -1) {
      for (Eigen::Index t = c; t < end; ++t) unpenalized.push_back(t);
      Eigen::MatrixXd sub(n, static_cast<Eigen::Index>(unpenalized.size()));
      for (std::size_t u = 0; u < unpenalized.size(); ++u) sub.col(static_cast<Eigen::Index>(u)) = out.X.col(unpenalized[u]);
      if (LeastSquares::rank(sub) < sub.cols()) {
        throw NumericalError("rank-deficient classical design: term '" + term +
                             "' is collinear with the preceding columns (or has an unsampled level)");
      }
    }
    c = end;
  }
  return out;
}

Eigen::VectorXd design_column_means(const DesignSpec& spec, const PoststratTable& table) {
  const DesignMatrices pop = population_design(spec, table.grid());
  const auto N = table.population();
  const Eigen::Map<const Eigen::VectorXd> Nv(N.data(), static_cast<Eigen::Index>(N.size()));
  return pop.X_pop.transpose() * Nv / table.population_total();
}

Eigen::DiagonalMatrix<double, Eigen::Dynamic> prior_precision(
    const DesignMatrices& matrices, const std::map<std::string, double>& sigmas) {
  const Eigen::Index k = matrices.columns();
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(k);
  std::vector<double> batch_precision(matrices.batch_names.size());
  for (std::size_t b = 0; b < matrices.batch_names.size(); ++b) {
    const auto it = sigmas.find(matrices.batch_names[b]);
    if (it == sigmas.end()) throw ConfigError("no standard deviation given for batch '" + matrices.batch_names[b] + "'");
    const double sigma = it->second;
    if (!(sigma > 0.0)) throw ConfigError("batch '" + matrices.batch_names[b] + "' needs sigma > 0");
    batch_precision[b] = std::isinf(sigma) ? 0.0 : 1.0 / (sigma * sigma);
  }
  for (Eigen::Index c = 0; c < k; ++c) {
    const int b = matrices.column_batch[static_cast<std::size_t>(c)];
    if (b >= 0) diag(c) = batch_precision[static_cast<std::size_t>(b)];
  }
  return Eigen::DiagonalMatrix<double, Eigen::Dynamic>(diag);
}

}  // namespace poststrat
