#pragma once

#include <vector>

#include <Eigen/Dense>

#include "msvar/kernels.hpp"
#include "msvar/model.hpp"

// Coefficient estimation shared by EM and Gibbs. Free coefficients of all
// regimes are stacked into one vector theta; shared (non-switching) columns
// map to a single slot used by every regime.
namespace msvar::detail {

struct CoefficientLayout {
  struct Entry {
    Eigen::Index equation;  // position in spec.equations()
    Eigen::Index column;  // column of [A0 A1 ... Ap]
    Eigen::Index slot;  // index into theta
  };
  std::vector<std::vector<Entry>> regimes;
  Eigen::Index size = 0;

  static CoefficientLayout build(const ModelSpec& spec);
};

struct NormalEquations {
  Eigen::MatrixXd lhs;
  Eigen::VectorXd rhs;
};

// sum_m sum_t w_tm X_tm' Lambda_m X_tm theta = sum_m sum_t w_tm X_tm' Lambda_m y_t,
// built from per-regime moments and equation-block precisions Lambda_m.
NormalEquations assemble_normal_equations(const ModelSpec& spec, const CoefficientLayout& layout,
                                          const std::vector<kernels::Moments>& moments,
                                          const std::vector<Eigen::MatrixXd>& precisions);

// Writes theta into the coefficient blocks of params (restricted entries 0).
void scatter_coefficients(const CoefficientLayout& layout, const Eigen::VectorXd& theta,
                          ModelParams& params);

// True when per-regime (or pooled) ordinary least squares is the exact
// minimiser regardless of the covariances: every equation uses the full
// regressor vector and the coefficient sharing pattern matches the
// covariance sharing pattern.
bool ols_is_exact(const ModelSpec& spec);

// Solves an SPD system; adds a small ridge when the factorisation fails.
Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& rhs);

// Equation-block covariance of regime m.
Eigen::MatrixXd equation_block(const ModelParams& params, int m);
// Embeds an equation-block covariance into N x N; unmodelled channels get
// unit variance.
Eigen::MatrixXd embed_covariance(const ModelSpec& spec, const Eigen::MatrixXd& block);

// Coefficient rows of regime m restricted to the equation channels.
Eigen::MatrixXd equation_coefficients(const ModelParams& params, int m);

}  // namespace msvar::detail
