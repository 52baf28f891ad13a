#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msvar/series.hpp"

namespace msvar {

// One-step switching regression of a target channel on other channels'
// previous values: y_t[target] = sum_k phi_k * y_{t-1}[regressor_k] + e_t,
// with a per-regime scalar variance. The intercept is off unless enabled.
struct RegressionMode {
  Eigen::Index target = 0;
  std::vector<Eigen::Index> regressors;
  bool intercept = false;
};

struct ModelSpec {
  Eigen::Index n_channels = 1;
  int n_regimes = 1;
  int lags = 0;
  bool switch_intercept = true;
  bool switch_coeffs = true;
  bool switch_cov = true;
  // Each channel regresses on its own lags only; cross-channel dependence
  // remains in the covariance.
  bool diagonal_var = false;
  std::optional<RegressionMode> regression;

  // Length of the regressor vector z_t = [1, y_{t-1}, ..., y_{t-p}].
  Eigen::Index regressor_count() const { return 1 + n_channels * lags; }
  // Column of z_t holding channel `channel` at lag `lag` (1-based lag).
  Eigen::Index lag_column(int lag, Eigen::Index channel) const {
    return 1 + static_cast<Eigen::Index>(lag - 1) * n_channels + channel;
  }
  // Channels whose conditional density enters the likelihood.
  std::vector<Eigen::Index> equations() const;
  // Free entries of the N x K coefficient matrix [A0 A1 ... Ap].
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> coefficient_mask() const;
  // Whether column a of the coefficient matrix differs across regimes.
  bool column_switches(Eigen::Index column) const {
    return column == 0 ? switch_intercept : switch_coeffs;
  }
  // Number of free parameters, including M(M-1) transition probabilities.
  Eigen::Index parameter_count() const;

  // Empty when the spec is consistent.
  std::vector<std::string> check() const;
  // Throws ConfigError listing every problem.
  void require_valid() const;
};

// Regime-switching VAR parameters. Regime and lag indices are 0-based:
// coeffs[m][i] is the N x N matrix applied to y_{t-i-1} in regime m.
// transition(i, j) = Pr(s_t = j | s_{t-1} = i), rows sum to one.
struct ModelParams {
  ModelSpec spec;
  Eigen::MatrixXd intercepts;  // M x N
  std::vector<std::vector<Eigen::MatrixXd>> coeffs;  // M x p x (N x N)
  std::vector<Eigen::MatrixXd> covariances;  // M x (N x N)
  Eigen::MatrixXd transition;  // M x M
  Eigen::VectorXd initial_dist;  // M

  int n_regimes() const { return spec.n_regimes; }
  Eigen::Index n_channels() const { return spec.n_channels; }
  int lags() const { return spec.lags; }

  // Coefficient matrix [A0 A1 ... Ap] of regime m (N x K).
  Eigen::MatrixXd design(int m) const;
  void set_design(int m, const Eigen::MatrixXd& design);

  // Zero coefficients, identity covariances, uniform transition and
  // initial distribution.
  static ModelParams zeros(const ModelSpec& spec);
};

// Stationary distribution of a row-stochastic matrix; uniform when the
// chain has more than one closed class and the stationary law is not unique.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition);

// Converts a column-stochastic matrix (entry (i, j) = Pr(to i | from j)) to
// the row-stochastic storage convention, and back.
Eigen::MatrixXd from_column_stochastic(const Eigen::MatrixXd& column_form);
Eigen::MatrixXd to_column_stochastic(const Eigen::MatrixXd& row_form);

// Relabels regimes: regime k of the result is regime perm[k] of the input.
ModelParams permute_regimes(const ModelParams& params, const std::vector<int>& perm);

// Every broken ModelParams invariant, each message naming the offending
// row or regime. Empty means valid.
std::vector<std::string> validate(const ModelParams& params);

// Target rows and regressor rows aligned for a given lag order. Row r of
// both matrices corresponds to time index first + r of the source series.
struct LaggedData {
  Eigen::MatrixXd y;  // T_eff x N
  Eigen::MatrixXd z;  // T_eff x K, z = [1, y_{t-1}, ..., y_{t-p}]
  Eigen::Index first = 0;
  int lags = 0;

  Eigen::Index rows() const { return y.rows(); }
};

LaggedData make_lagged(const Eigen::MatrixXd& data, int lags);

// Cholesky-factored Gaussian for one regime restricted to the equation
// channels.
struct RegimeGaussian {
  Eigen::MatrixXd coef;  // N_e x K rows of the design for equation channels
  Eigen::MatrixXd chol_lower;  // N_e x N_e
  double log_norm = 0.0;  // -N_e/2 log(2 pi) - log det(L)
};

// Factors each regime's covariance. Near-singular covariances get a ridge
// of 1e-8 * trace / N_e with a warning; indefinite ones throw
// NumericalError naming the regime.
std::vector<RegimeGaussian> factor_regimes(const ModelParams& params);

// log f(y_t | Y_{t-1}, regime) for a 0-based time index t with lags <= t < T.
double conditional_log_density(const ObservationSeries& series, const ModelParams& params,
                               Eigen::Index t, int regime);

// T_eff x M table of log densities for rows t = p .. T-1.
Eigen::MatrixXd log_density_table(const LaggedData& data, const ModelParams& params);
Eigen::MatrixXd log_density_table(const ObservationSeries& series, const ModelParams& params);

// Observed-data log-likelihood via the Hamilton filter's prediction-error
// decomposition. The first p observations only condition the recursion.
double log_likelihood(const ObservationSeries& series, const ModelParams& params);

}  // namespace msvar
