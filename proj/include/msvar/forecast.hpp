#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "msvar/em.hpp"
#include "msvar/model.hpp"
#include "msvar/series.hpp"

namespace msvar {

// Predictive mixture at one horizon: regime weights Pr(s_{t+h} = j | y_1..t),
// regime-conditional means and covariances, and the mixture mean.
struct ForecastStep {
  Eigen::VectorXd weights;  // M
  Eigen::MatrixXd means;  // M x N
  std::vector<Eigen::MatrixXd> covariances;  // M x (N x N)
  Eigen::VectorXd point;  // N
  Eigen::VectorXd lower;  // central interval, per channel
  Eigen::VectorXd upper;
};

struct Forecast {
  std::vector<std::string> channels;
  double interval_level = 0.95;
  bool exact = false;
  std::vector<ForecastStep> steps;  // steps[h - 1]

  int horizon() const { return static_cast<int>(steps.size()); }
};

struct ForecastOptions {
  double interval_level = 0.95;
  // Enumerate all M^h regime paths instead of the plug-in mean recursion.
  bool exact_mixture = false;
};

inline constexpr int kMaxExactHorizon = 6;

// Forecasts `horizon` steps past the last row of the series. Regime weights
// follow xi_{T|T}' P^h. Without exact_mixture, each step's mixture mean is
// fed back as the lagged input of the next step and the state covariance is
// propagated by moment matching.
Forecast forecast(const ObservationSeries& series, const ModelParams& params, int horizon,
                  const ForecastOptions& options = {});
// Same, from the last p rows of history and the final filtered row.
Forecast forecast_from(const Eigen::MatrixXd& history, const Eigen::VectorXd& filtered_last,
                       const ModelParams& params, int horizon, const ForecastOptions& options = {},
                       std::vector<std::string> channels = {});

// Per-channel mean squared error of point forecasts over all horizons.
struct ChannelErrors {
  std::vector<std::string> channels;  // report order
  std::vector<double> mse;
  double total() const;
};

// Canonical car-following channels are reported as (a, dv, h, v); other
// series keep their native order.
std::vector<Eigen::Index> report_channel_order(const std::vector<std::string>& channels);

ChannelErrors evaluate_mse(const Forecast& forecast, const Eigen::MatrixXd& actual_tail);

struct ComparisonRow {
  std::string model;
  ChannelErrors errors;
};

struct ComparisonTable {
  int horizon = 0;
  std::vector<ComparisonRow> rows;  // ascending total MSE, ties keep input order
};

struct NamedModel {
  std::string name;
  ModelParams params;
};

// Holds out the final `horizon` rows, filters each model on the prefix and
// scores its forecasts against the held-out rows.
ComparisonTable compare_models(const ObservationSeries& series, const std::vector<NamedModel>& models,
                               int horizon, const ForecastOptions& options = {});
// Fits each spec by EM on the prefix first, then compares.
ComparisonTable compare_specs(const ObservationSeries& series, const std::vector<ModelSpec>& specs,
                              int horizon, const EmConfig& config, const ForecastOptions& options = {});

std::string forecast_to_csv(const Forecast& forecast);  // h,channel,point,lo,hi
nlohmann::json forecast_to_json(const Forecast& forecast);
std::string comparison_to_csv(const ComparisonTable& table);  // model,<channels...>,total
nlohmann::json comparison_to_json(const ComparisonTable& table);
// t,channel,observed,predicted,lo,hi over a context window plus the forecast.
std::string plot_data_csv(const ObservationSeries& series, Eigen::Index origin, const Forecast& forecast,
                          Eigen::Index context_rows);

}  // namespace msvar
