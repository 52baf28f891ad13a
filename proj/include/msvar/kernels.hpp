#pragma once

#include <vector>

#include <Eigen/Dense>

#include "msvar/model.hpp"

// Data-parallel inner loops of the estimators. Each kernel has a plain
// serial reference and an OpenMP version. The OpenMP versions split rows
// into fixed-size chunks and combine partial sums in chunk order, so their
// output does not depend on the thread count.
namespace msvar::kernels {

inline constexpr Eigen::Index kChunkRows = 512;

// Probability-weighted second moments of the regression data.
struct Moments {
  Eigen::MatrixXd zz;  // K x K, sum_t w_t z_t z_t'
  Eigen::MatrixXd zy;  // K x N, sum_t w_t z_t y_t'
  double weight = 0.0;  // sum_t w_t
};

namespace serial {

Eigen::MatrixXd log_density_table(const LaggedData& data, const std::vector<RegimeGaussian>& regimes,
                                  const std::vector<Eigen::Index>& equations);
Moments weighted_moments(const LaggedData& data, const Eigen::VectorXd& weights);
// sum_t w_t r_t r_t' with r_t = y_t[E] - coef z_t.
Eigen::MatrixXd residual_scatter(const LaggedData& data, const Eigen::MatrixXd& coef,
                                 const std::vector<Eigen::Index>& equations,
                                 const Eigen::VectorXd& weights);

}  // namespace serial

namespace parallel {

Eigen::MatrixXd log_density_table(const LaggedData& data, const std::vector<RegimeGaussian>& regimes,
                                  const std::vector<Eigen::Index>& equations);
Moments weighted_moments(const LaggedData& data, const Eigen::VectorXd& weights);
Eigen::MatrixXd residual_scatter(const LaggedData& data, const Eigen::MatrixXd& coef,
                                 const std::vector<Eigen::Index>& equations,
                                 const Eigen::VectorXd& weights);

}  // namespace parallel

// Rows of y restricted to the equation channels.
Eigen::MatrixXd equation_targets(const LaggedData& data, const std::vector<Eigen::Index>& equations);

// Sets the OpenMP worker count; 0 keeps the runtime default.
void set_thread_count(int threads);
int thread_count();

}  // namespace msvar::kernels
