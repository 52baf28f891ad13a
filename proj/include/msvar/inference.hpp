#pragma once

#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "msvar/model.hpp"
#include "msvar/series.hpp"

namespace msvar {

// Regime probability tables over the effective sample. Row r refers to
// time index offset + r of the series (offset = lag order).
struct RegimeProbabilities {
  Eigen::Index offset = 0;
  Eigen::MatrixXd filtered;  // Pr(s_t | y_1..t)
  Eigen::MatrixXd predicted;  // Pr(s_t | y_1..t-1)
  Eigen::MatrixXd smoothed;  // Pr(s_t | y_1..T)
  // pairwise[r](i, j) = Pr(s_{t-1} = i, s_t = j | y_1..T) for t = offset + r + 1.
  std::vector<Eigen::MatrixXd> pairwise;
  double log_likelihood = 0.0;
  std::vector<std::string> warnings;

  Eigen::Index rows() const { return filtered.rows(); }
};

// Scaled forward recursion from a precomputed T_eff x M log-density table.
// The initial distribution is the predicted probability of the first
// effective row.
RegimeProbabilities hamilton_filter(const Eigen::MatrixXd& log_density, const ModelParams& params);
RegimeProbabilities hamilton_filter(const ObservationSeries& series, const ModelParams& params);

// Backward recursion; fills smoothed and pairwise in place.
void smooth(RegimeProbabilities& probs, const ModelParams& params);

// Filter followed by smoother.
RegimeProbabilities infer_regimes(const ObservationSeries& series, const ModelParams& params);

// Most probable regime per row, 0-based; ties go to the lowest index.
std::vector<int> classify(const Eigen::MatrixXd& smoothed);

// 1 / (1 - P_ii); +infinity for an absorbing regime.
double expected_duration(const Eigen::MatrixXd& transition, int regime);
// Pr(D = k) = P_ii^(k-1) (1 - P_ii), k >= 1.
double duration_probability(double stay_probability, int k);

struct RegimeStats {
  double expected_duration_steps = 0.0;
  double expected_duration_seconds = 0.0;
  int occurrences = 0;  // maximal constant runs
  int observations = 0;
  double percentage = 0.0;
};

struct RegimeReport {
  std::vector<RegimeStats> regimes;
  int total_observations = 0;
  double sample_interval = 1.0;
};

RegimeReport regime_report(const std::vector<int>& classification, const Eigen::MatrixXd& transition,
                           double sample_interval = 1.0);
nlohmann::json report_to_json(const RegimeReport& report);
// Columns: regime,expected_duration_steps,expected_duration_seconds,occurrence,observations,percentage
std::string report_to_csv(const RegimeReport& report);

// `t,regime,xi_1..xi_M` with 1-based regimes and the given probability table.
std::string probabilities_to_csv(const RegimeProbabilities& probs, const std::vector<int>& classification,
                                 const std::vector<double>& timestamps);

}  // namespace msvar
