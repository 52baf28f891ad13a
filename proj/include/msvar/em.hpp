#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "msvar/inference.hpp"
#include "msvar/model.hpp"
#include "msvar/series.hpp"

namespace msvar {

enum class InitStrategy { kmeans_on_residuals, random_responsibilities };

struct EmConfig {
  int max_iters = 500;
  double rel_tol = 1e-8;
  int n_restarts = 5;
  std::uint64_t seed = 0;
  double ridge = 1e-8;
  InitStrategy init = InitStrategy::kmeans_on_residuals;

  void require_valid() const;
};

struct EmTrace {
  std::vector<double> log_likelihood;  // one entry per E-step
  int iterations = 0;  // M-steps taken
  bool converged = false;
  int best_restart = 0;
};

struct FitResult {
  std::string method;  // "em" or "gibbs"
  ModelParams params;
  RegimeProbabilities probs;
  std::vector<int> classification;
  EmTrace trace;
  bool converged = true;
  bool degenerate = false;  // a modelled channel is (near) constant
  std::vector<std::string> warnings;
};

// Probability-weighted least squares for the coefficients, weighted residual
// covariances and transition counts. When the coefficient estimate depends
// on the covariances (restricted or partially shared blocks) `previous`
// supplies them; without it the two conditional updates are iterated to a
// fixed point.
ModelParams m_step(const ObservationSeries& series, const RegimeProbabilities& probs,
                   const ModelSpec& spec, const ModelParams* previous = nullptr, double ridge = 1e-8);
ModelParams m_step(const LaggedData& data, const Eigen::MatrixXd& smoothed,
                   const Eigen::MatrixXd& transition_counts, const ModelSpec& spec,
                   const ModelParams* previous, double ridge);

// Runs EM from the given starting point (no restarts). Regimes of the
// result are ordered by ascending residual variance.
FitResult run_em(const ObservationSeries& series, const ModelParams& init, const EmConfig& config);

// Best of config.n_restarts EM runs by final log-likelihood; restarts run
// concurrently and are merged by (likelihood, restart index).
FitResult fit_em(const ObservationSeries& series, const ModelSpec& spec, const EmConfig& config);

// Starting parameters for one restart.
ModelParams initial_params(const ObservationSeries& series, const ModelSpec& spec,
                           InitStrategy strategy, std::uint64_t seed, int restart);

// Sorts regimes by ascending trace of the equation-block covariance.
std::vector<int> variance_order(const ModelParams& params);
void permute_probabilities(RegimeProbabilities& probs, const std::vector<int>& perm);

// Minimum effective rows a regime needs for a non-degenerate regression.
Eigen::Index min_rows_per_regime(const ModelSpec& spec);

nlohmann::json trace_to_json(const EmTrace& trace);

}  // namespace msvar
