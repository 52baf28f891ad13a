#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "msvar/em.hpp"
#include "msvar/model.hpp"
#include "msvar/series.hpp"

namespace msvar {

struct Criteria {
  double aic = 0.0;
  double bic = 0.0;
  double hqc = 0.0;
};

// AIC = 2k - 2 lnL, BIC = k ln T - 2 lnL, HQC = 2k ln ln T - 2 lnL.
// Throws ConfigError when T_eff <= e (ln ln T undefined or negative) or k < 1.
Criteria criteria(double log_lik, Eigen::Index k, Eigen::Index t_eff);

enum class Criterion { aic, bic, hqc, loglik };
Criterion parse_criterion(const std::string& name);
std::string to_string(Criterion c);

enum class CellStatus { ok, nonconverged, degenerate, failed };
std::string to_string(CellStatus s);

struct GridCell {
  int lags = 0;
  int regimes = 0;
  Eigen::Index k = 0;
  CellStatus status = CellStatus::failed;
  double log_likelihood = 0.0;  // meaningful unless failed
  Criteria scores;
  std::string message;  // failure reason or warnings
  std::optional<ModelParams> params;

  double score(Criterion c) const;
};

struct SelectionGrid {
  std::vector<int> lag_values;
  std::vector<int> regime_values;
  Eigen::Index t_eff = 0;  // rows shared by every cell
  std::vector<GridCell> cells;  // lag-major: cells[i * regimes + j]
  std::vector<std::string> warnings;

  const GridCell& at(int lags, int regimes) const;
  // Index of the best non-failed cell (lowest criterion, highest
  // likelihood); ties go to the earlier cell. -1 when all cells failed.
  int best(Criterion c) const;
  std::vector<const GridCell*> failed() const;
};

// Parses "1..5", "3" or "1,2,4" into a sorted list of distinct values.
std::vector<int> parse_range(const std::string& text);

// Fits every (p, M) cell by EM on one shared sample: each cell drops the
// first max(p) - p rows so the likelihoods cover the same targets.
// spec_template supplies channels, switch flags and restrictions.
SelectionGrid grid_search(const ObservationSeries& series, const std::vector<int>& lag_values,
                          const std::vector<int>& regime_values, const ModelSpec& spec_template,
                          const EmConfig& config);
SelectionGrid lag_curve(const ObservationSeries& series, const std::vector<int>& lag_values, int regimes,
                        const ModelSpec& spec_template, const EmConfig& config);

std::string grid_to_csv(const SelectionGrid& grid);  // p,M,loglik,aic,bic,hqc,k,status
std::string lag_curve_to_csv(const SelectionGrid& grid);  // p,loglik,aic,bic,hqc,k,status
// Log-likelihood table with one row per M and one column per p.
std::string loglik_table_csv(const SelectionGrid& grid);
nlohmann::json best_cell_json(const SelectionGrid& grid, Criterion c);

}  // namespace msvar
