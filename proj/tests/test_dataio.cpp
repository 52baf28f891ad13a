#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>

#include "msvar/config.hpp"
#include "msvar/csv.hpp"
#include "msvar/error.hpp"
#include "msvar/geo.hpp"
#include "msvar/ingest.hpp"
#include "msvar/series.hpp"

using namespace msvar;

namespace {

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "msvar_dataio";
  std::filesystem::create_directories(dir);
  return dir;
}

// Great-circle distance from the spherical law of cosines in vector form.
double chord_oracle(double lat1, double lon1, double lat2, double lon2) {
  const double d = std::numbers::pi / 180.0;
  auto unit = [&](double lat, double lon) {
    return Eigen::Vector3d(std::cos(lat * d) * std::cos(lon * d), std::cos(lat * d) * std::sin(lon * d),
                           std::sin(lat * d));
  };
  const Eigen::Vector3d a = unit(lat1, lon1);
  const Eigen::Vector3d b = unit(lat2, lon2);
  return kEarthRadius * std::atan2(a.cross(b).norm(), a.dot(b));
}

std::string fcd_text(double gap_row3 = 20.0) {
  return "time,v,dv,h\n"
         "0.0,10.0,0.5,20.0\n"
         "0.1,10.2,0.4,20.1\n"
         "0.2,10.3,0.3," + std::to_string(gap_row3) + "\n"
         "0.3,10.3,0.2,20.3\n";
}

SensorLogRecord fix(double t, double lat, double lon, double speed) {
  SensorLogRecord r;
  r.point = {lat, lon, t};
  r.speed = speed;
  return r;
}

}  // namespace

TEST(Csv, ParsesHeaderRowsAndMissingValues) {
  const auto table = parse_csv("\xEF\xBB\xBF" "a, b ,c\r\n1,2,3\n\n4,NA,6\n");
  EXPECT_EQ(table.header, (std::vector<std::string>{"a", "b", "c"}));
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(*table.column("c"), 2u);
  EXPECT_FALSE(parse_number(table.rows[1][1]).has_value());
  EXPECT_EQ(*parse_number(" 2.5 "), 2.5);
  EXPECT_FALSE(parse_number("2.5x").has_value());
  EXPECT_THROW(table.require_column("zz", "f.csv"), InputError);
  EXPECT_THROW(parse_csv(""), InputError);
}

TEST(Csv, ExactFormattingRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 0.0}) {
    const auto s = format_exact(v);
    EXPECT_EQ(std::strtod(s.c_str(), nullptr), v) << s;
  }
  EXPECT_EQ(format_exact(0.1), "0.1");
  EXPECT_EQ(format_short(16.666666), "16.67");
}

TEST(Toml, SubsetParsesIntoJson) {
  const auto j = parse_toml(R"(
# run settings
seed = 7
name = "drive one"   # trailing comment
[fit]
method = 'em'
lags = 2
tol = 1e-8
restarts = 1_000
switch = true
regimes = [2, 3]
[fit.prior]
coeff_sd = 10.0
)");
  EXPECT_EQ(j["seed"], 7);
  EXPECT_EQ(j["name"], "drive one");
  EXPECT_EQ(j["fit"]["method"], "em");
  EXPECT_EQ(j["fit"]["lags"], 2);
  EXPECT_DOUBLE_EQ(j["fit"]["tol"].get<double>(), 1e-8);
  EXPECT_EQ(j["fit"]["restarts"], 1000);
  EXPECT_TRUE(j["fit"]["switch"].get<bool>());
  EXPECT_EQ(j["fit"]["regimes"].size(), 2u);
  EXPECT_DOUBLE_EQ(j["fit"]["prior"]["coeff_sd"].get<double>(), 10.0);
}

TEST(Toml, ErrorsNameTheLine) {
  try {
    parse_toml("a = 1\nb = \n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  EXPECT_THROW(parse_toml("a = 1\na = 2\n"), ConfigError);
  EXPECT_THROW(parse_toml("a = \"open\n"), ConfigError);
  EXPECT_THROW(parse_toml("[t\n"), ConfigError);
}

TEST(Config, DispatchesOnExtension) {
  const auto dir = temp_dir();
  std::ofstream(dir / "c.json") << R"({"fit": {"lags": 3}})";
  std::ofstream(dir / "c.toml") << "[fit]\nlags = 3\n";
  EXPECT_EQ(load_config(dir / "c.json"), load_config(dir / "c.toml"));
  std::ofstream(dir / "bad.json") << "{";
  EXPECT_THROW(load_config(dir / "bad.json"), ConfigError);
}

TEST(Geo, HaversineMatchesIndependentFormula) {
  EXPECT_NEAR(haversine_distance({0, 0, 0}, {0, 1, 0}), kEarthRadius * std::numbers::pi / 180.0, 1e-6);
  EXPECT_NEAR(haversine_distance({0, 0, 0}, {0, 1, 0}), 111194.93, 0.01);
  const double cases[][4] = {{52.5200, 13.4050, 48.8566, 2.3522},
                             {-33.8688, 151.2093, 40.7128, -74.0060},
                             {10.0, 20.0, 10.00001, 20.00001},
                             {89.9, 0.0, -89.9, 180.0}};
  for (const auto& c : cases) {
    const double expected = chord_oracle(c[0], c[1], c[2], c[3]);
    const double got = haversine_distance({c[0], c[1], 0}, {c[2], c[3], 0});
    EXPECT_NEAR(got, expected, 1e-6 * std::max(1.0, expected));
  }
  EXPECT_EQ(haversine_distance({12.0, 34.0, 0}, {12.0, 34.0, 0}), 0.0);
  EXPECT_THROW(check_coordinates({91.0, 0.0, 0}), InputError);
  EXPECT_THROW(check_coordinates({0.0, -181.0, 0}), InputError);
}

TEST(Timestamp, EpochAndIso) {
  EXPECT_DOUBLE_EQ(parse_timestamp("1700000000.5"), 1700000000.5);
  EXPECT_DOUBLE_EQ(parse_timestamp("1970-01-02T00:00:01Z"), 86401.0);
  EXPECT_DOUBLE_EQ(parse_timestamp("2023-11-14 22:13:20.25"), 1700000000.25);
  EXPECT_DOUBLE_EQ(parse_timestamp("2023-11-15T00:13:20+02:00"), 1700000000.0);
  EXPECT_THROW(parse_timestamp("yesterday"), InputError);
}

TEST(Fcd, BuildsCanonicalChannels) {
  const auto s = ingest_fcd_table(parse_csv(fcd_text()), FcdSchema{});
  EXPECT_EQ(s.channels, (std::vector<std::string>{"v", "a", "dv", "h"}));
  EXPECT_NEAR(s.sample_interval, 0.1, 1e-12);
  EXPECT_NEAR(s.data(1, 1), 2.0, 1e-9);
  EXPECT_NEAR(s.data(0, 1), s.data(1, 1), 1e-15);
  EXPECT_NEAR(s.data(3, 1), 0.0, 1e-9);
  EXPECT_EQ(s.data(2, 3), 20.0);
}

TEST(Fcd, SchemaRemapsColumns) {
  const auto table = parse_csv("sec,speed,rel,gap,acc\n0,1,0,5,0.5\n1,2,0,5,0.7\n");
  const auto schema = FcdSchema::from_json({{"time", "sec"}, {"v", "speed"}, {"dv", "rel"}, {"h", "gap"}, {"a", "acc"}});
  const auto s = ingest_fcd_table(table, schema);
  EXPECT_EQ(s.data(1, 1), 0.7);
}

TEST(Fcd, RejectsBadRowsByLineNumber) {
  try {
    ingest_fcd_table(parse_csv(fcd_text(0.0)), FcdSchema{});
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("row 4"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("non-positive gap"), std::string::npos);
  }
  EXPECT_THROW(ingest_fcd_table(parse_csv("time,v,dv,h\n0,1,0,5\n0,1,0,5\n"), FcdSchema{}), InputError);
  EXPECT_THROW(ingest_fcd_table(parse_csv("time,v,dv\n0,1,0\n1,1,0\n"), FcdSchema{}), InputError);
  EXPECT_THROW(ingest_fcd_table(parse_csv("time,v,dv,h\n0,1,,5\n1,1,0,5\n"), FcdSchema{}), InputError);
}

TEST(Smartphone, AlignsPairOnFollowerGrid) {
  // Both cars drive north along a meridian; the leader is 0.0003 degrees ahead.
  std::vector<SensorLogRecord> leader, follower;
  for (int k = 0; k < 20; ++k) {
    leader.push_back(fix(100.0 + k + 0.2, 45.0003 + k * 1e-4, 7.0, 11.0));
    follower.push_back(fix(100.0 + k, 45.0 + k * 1e-4, 7.0, 10.0 + 0.1 * k));
  }
  AlignConfig cfg;
  const auto s = ingest_smartphone_pair(leader, follower, cfg);
  ASSERT_EQ(s.length(), 20);
  EXPECT_EQ(s.channels, (std::vector<std::string>{"v", "a", "dv", "h"}));
  EXPECT_NEAR(s.data(5, 0), 10.5, 1e-12);
  EXPECT_NEAR(s.data(5, 1), 0.1, 1e-9);
  EXPECT_NEAR(s.data(5, 2), 11.0 - 10.5, 1e-12);
  EXPECT_NEAR(s.data(5, 3), chord_oracle(45.0008, 7.0, 45.0005, 7.0), 1e-6);
  EXPECT_TRUE(s.flags.empty());
}

TEST(Smartphone, ToleranceAndOverlap) {
  std::vector<SensorLogRecord> leader, follower;
  for (int k = 0; k < 20; ++k) {
    leader.push_back(fix(1000.0 + k, 45.001, 7.0, 10.0));
    follower.push_back(fix(100.0 + k, 45.0, 7.0, 10.0));
  }
  try {
    ingest_smartphone_pair(leader, follower, AlignConfig{});
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient overlap"), std::string::npos);
  }
  EXPECT_THROW(ingest_smartphone_pair({}, follower, AlignConfig{}), InputError);
  EXPECT_THROW(AlignConfig::from_json({{"rate_hz", 0.0}}), ConfigError);
}

TEST(Smartphone, CoincidentFixesAreFlagged) {
  std::vector<SensorLogRecord> leader, follower;
  for (int k = 0; k < 12; ++k) {
    leader.push_back(fix(k, 45.0 + k * 1e-4, 7.0, 10.0));
    follower.push_back(fix(k, 45.0 + k * 1e-4 - (k == 4 ? 0.0 : 2e-4), 7.0, 10.0));
  }
  const auto s = ingest_smartphone_pair(leader, follower, AlignConfig{});
  ASSERT_EQ(s.flags.size(), 1u);
  EXPECT_NE(s.flags[0].find("non-positive gap"), std::string::npos);
  EXPECT_THROW(s.validate(), InputError);
}

TEST(SensorLog, FillsMissingSpeedFromFixes) {
  const auto table = parse_csv(
      "timestamp,lat,lon,speed\n"
      "1970-01-01T00:00:00Z,0,0,-1\n"
      "1970-01-01T00:00:10Z,0,0.001,\n"
      "1970-01-01T00:00:20Z,0,0.002,5.5\n");
  const auto log = read_sensor_log(table, SensorLogSchema{});
  const double step = haversine_distance({0, 0, 0}, {0, 0.001, 0});
  EXPECT_NEAR(*log[0].speed, step / 10.0, 1e-9);
  EXPECT_NEAR(*log[1].speed, step / 10.0, 1e-9);
  EXPECT_EQ(*log[2].speed, 5.5);
  EXPECT_THROW(read_sensor_log(parse_csv("timestamp,lat,lon,speed\n0,95,0,1\n"), SensorLogSchema{}), InputError);
}

TEST(Series, CanonicalRoundTrip) {
  Eigen::MatrixXd d(3, 2);
  d << 0.1, 2.0, 1.0 / 3.0, -4.5, 1e-9, 7.0;
  auto s = make_series(d, 0.1, {"a", "dv"});
  s.units = {"m/s^2", "m/s"};
  s.flags = {"note"};
  const auto path = temp_dir() / "series.csv";
  write_series(s, path);
  EXPECT_TRUE(std::filesystem::exists(temp_dir() / "series.json"));
  const auto back = read_series(path);
  EXPECT_EQ(back.data, s.data);
  EXPECT_EQ(back.channels, s.channels);
  EXPECT_EQ(back.units, s.units);
  EXPECT_EQ(back.flags, s.flags);
  EXPECT_EQ(back.sample_interval, 0.1);
}

TEST(Series, ValidateAndSlice) {
  auto s = make_series(Eigen::MatrixXd::Ones(4, 2), 1.0, {"v", "h"});
  EXPECT_NO_THROW(s.validate());
  s.data(2, 1) = 0.0;
  EXPECT_THROW(s.validate(), InputError);
  EXPECT_NO_THROW(s.validate(false));
  s.data(1, 0) = std::nan("");
  EXPECT_THROW(s.validate(false), InputError);
  const auto part = make_series(Eigen::MatrixXd::Random(5, 1)).slice(1, 3);
  EXPECT_EQ(part.length(), 3);
  EXPECT_EQ(part.timestamps.front(), 1.0);
  EXPECT_THROW(make_series(Eigen::MatrixXd::Random(5, 1)).slice(3, 3), IndexError);
}

TEST(Series, ResampleByIntegerStride) {
  Eigen::MatrixXd d(7, 1);
  d << 0, 1, 2, 3, 4, 5, 6;
  const auto s = make_series(d, 0.1);
  const auto r = resample(s, 0.3);
  EXPECT_EQ(r.length(), 3);
  EXPECT_EQ(r.data(2, 0), 6.0);
  EXPECT_NEAR(r.sample_interval, 0.3, 1e-15);
  EXPECT_THROW(resample(s, 0.25), ConfigError);
  EXPECT_THROW(resample(s, 0.0), ConfigError);
}
