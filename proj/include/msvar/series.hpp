#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace msvar {

// Canonical car-following channel names, in model order.
inline constexpr std::string_view kVelocity = "v";
inline constexpr std::string_view kAcceleration = "a";
inline constexpr std::string_view kSpeedDifference = "dv";
inline constexpr std::string_view kGap = "h";

// T x N multivariate time series. Rows are time, columns are channels.
struct ObservationSeries {
  std::vector<std::string> channels;
  std::vector<std::string> units;
  Eigen::MatrixXd data;
  std::vector<double> timestamps;
  double sample_interval = 1.0;
  std::string source;
  // Non-fatal conditions detected at ingest (e.g. non-positive gaps).
  std::vector<std::string> flags;

  Eigen::Index length() const { return data.rows(); }
  Eigen::Index n_channels() const { return data.cols(); }
  double t0() const { return timestamps.empty() ? 0.0 : timestamps.front(); }

  std::optional<Eigen::Index> channel_index(std::string_view name) const;
  // True when a gap channel is present; such series must keep h > 0.
  bool has_gap_channel() const { return channel_index(kGap).has_value(); }

  // Throws InputError on any broken invariant. The gap check is optional so
  // that ingest can emit a flagged degenerate pair.
  void validate(bool require_positive_gap = true) const;

  // Rows [first, first + count).
  ObservationSeries slice(Eigen::Index first, Eigen::Index count) const;
};

// Builds a series with generic channel names y1..yN and unit spacing.
ObservationSeries make_series(const Eigen::MatrixXd& data, double sample_interval = 1.0,
                              std::vector<std::string> channels = {});

// Canonical serialization: `t,<channels...>` CSV plus sidecar JSON holding
// sample_interval, units, source, channels and flags. The sidecar path is
// the CSV path with extension replaced by `.json`.
std::string series_to_csv(const ObservationSeries& series);
std::string series_metadata_json(const ObservationSeries& series);
void write_series(const ObservationSeries& series, const std::filesystem::path& csv_path);
ObservationSeries read_series(const std::filesystem::path& csv_path);

// Decimation by an integer stride. new_interval must be an integer multiple
// of the current sample interval.
ObservationSeries resample(const ObservationSeries& series, double new_interval);

}  // namespace msvar
