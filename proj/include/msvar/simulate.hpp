#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msvar/model.hpp"
#include "msvar/series.hpp"

namespace msvar {

struct SimOutput {
  ObservationSeries series;
  std::vector<int> true_states;  // 0-based, one per row of series
  ModelParams params;
};

// Draws s ~ pi then s_t ~ P[s_{t-1}], and y_t from the regime's Gaussian
// VAR. Pre-sample lags are zero; the first burn_in draws are discarded.
SimOutput simulate(const ModelParams& params, Eigen::Index length, std::uint64_t seed,
                   Eigen::Index burn_in = 100, double sample_interval = 1.0,
                   std::vector<std::string> channels = {});

struct RegimeStability {
  double spectral_radius = 0.0;
  bool stable = true;
};

// Companion-matrix spectral radius per regime; stable when < 1.
std::vector<RegimeStability> spectral_check(const ModelParams& params);
Eigen::MatrixXd companion_matrix(const ModelParams& params, int regime);

std::string states_to_csv(const std::vector<int>& states, const std::vector<double>& timestamps);

}  // namespace msvar
