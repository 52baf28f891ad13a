#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "msvar/csv.hpp"
#include "msvar/geo.hpp"
#include "msvar/series.hpp"

namespace msvar {

// Column mapping for floating-car-data CSV files.
struct FcdSchema {
  std::string time = "time";
  std::string v = "v";
  std::string dv = "dv";
  std::string h = "h";
  std::optional<std::string> a;  // derived from v when absent

  static FcdSchema from_json(const nlohmann::json& j);
};

ObservationSeries ingest_fcd_table(const CsvTable& table, const FcdSchema& schema,
                                   const std::string& source = "fcd");
ObservationSeries ingest_fcd_csv(const std::filesystem::path& path, const FcdSchema& schema);

struct SensorLogSchema {
  std::string timestamp = "timestamp";
  std::string lat = "lat";
  std::string lon = "lon";
  std::string speed = "speed";
  std::string heading = "heading";

  static SensorLogSchema from_json(const nlohmann::json& j);
};

struct AlignConfig {
  double tolerance = 0.5;  // seconds, nearest-neighbour join window
  double rate_hz = 1.0;  // output grid rate
  int smoothing_window = 1;  // centred moving average on v, dv, h; 1 = off

  static AlignConfig from_json(const nlohmann::json& j);
};

// Epoch seconds or ISO-8601 (YYYY-MM-DD[T ]hh:mm:ss[.fff][Z|+hh:mm]).
double parse_timestamp(std::string_view text);

// Missing or negative speeds are filled from consecutive GPS fixes.
std::vector<SensorLogRecord> read_sensor_log(const CsvTable& table, const SensorLogSchema& schema,
                                             const std::string& source = "sensor log");
std::vector<SensorLogRecord> read_sensor_log(const std::filesystem::path& path,
                                             const SensorLogSchema& schema);

ObservationSeries ingest_smartphone_pair(const std::vector<SensorLogRecord>& leader,
                                         const std::vector<SensorLogRecord>& follower,
                                         const AlignConfig& config);
ObservationSeries ingest_smartphone_pair(const std::filesystem::path& leader_log,
                                         const std::filesystem::path& follower_log,
                                         const SensorLogSchema& schema, const AlignConfig& config);

// First difference of v over the sample spacing; row 0 copies row 1.
Eigen::VectorXd derive_acceleration(const Eigen::VectorXd& v, const std::vector<double>& timestamps);

}  // namespace msvar
