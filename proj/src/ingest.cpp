#include "msvar/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "msvar/error.hpp"

namespace msvar {
namespace {

double median_spacing(const std::vector<double>& ts) {
  std::vector<double> d;
  d.reserve(ts.size());
  for (std::size_t i = 1; i < ts.size(); ++i) d.push_back(ts[i] - ts[i - 1]);
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  return d[d.size() / 2];
}

// Days from 1970-01-01 for a proleptic Gregorian date.
long long days_from_civil(long long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

Eigen::VectorXd moving_average(const Eigen::VectorXd& x, int window) {
  if (window <= 1) return x;
  const Eigen::Index half = window / 2;
  const Eigen::Index n = x.size();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index lo = std::max<Eigen::Index>(0, i - half);
    const Eigen::Index hi = std::min<Eigen::Index>(n - 1, i + half);
    out(i) = x.segment(lo, hi - lo + 1).mean();
  }
  return out;
}

// Index of the record nearest to t within tolerance, or -1.
long nearest_record(const std::vector<SensorLogRecord>& log, double t, double tolerance) {
  auto it = std::lower_bound(log.begin(), log.end(), t, [](const SensorLogRecord& r, double x) {
    return r.point.timestamp < x;
  });
  long best = -1;
  double best_gap = tolerance;
  auto consider = [&](decltype(it) cand) {
    const double gap = std::abs(cand->point.timestamp - t);
    if (gap <= best_gap) {
      // Ties resolve to the earlier record: it is considered first and
      // later candidates must be strictly closer.
      if (best < 0 || gap < best_gap) {
        best = static_cast<long>(cand - log.begin());
        best_gap = gap;
      }
    }
  };
  if (it != log.begin()) consider(std::prev(it));
  if (it != log.end()) consider(it);
  return best;
}

}  // namespace

FcdSchema FcdSchema::from_json(const nlohmann::json& j) {
  FcdSchema s;
  s.time = j.value("time", s.time);
  s.v = j.value("v", s.v);
  s.dv = j.value("dv", s.dv);
  s.h = j.value("h", s.h);
  if (j.contains("a")) s.a = j["a"].get<std::string>();
  return s;
}

SensorLogSchema SensorLogSchema::from_json(const nlohmann::json& j) {
  SensorLogSchema s;
  s.timestamp = j.value("timestamp", s.timestamp);
  s.lat = j.value("lat", s.lat);
  s.lon = j.value("lon", s.lon);
  s.speed = j.value("speed", s.speed);
  s.heading = j.value("heading", s.heading);
  return s;
}

AlignConfig AlignConfig::from_json(const nlohmann::json& j) {
  AlignConfig c;
  c.tolerance = j.value("tolerance", c.tolerance);
  c.rate_hz = j.value("rate_hz", c.rate_hz);
  c.smoothing_window = j.value("smoothing_window", c.smoothing_window);
  if (!(c.tolerance >= 0.0)) throw ConfigError("align tolerance must be non-negative");
  if (!(c.rate_hz > 0.0)) throw ConfigError("align rate must be positive");
  if (c.smoothing_window < 1) throw ConfigError("smoothing window must be >= 1");
  return c;
}

Eigen::VectorXd derive_acceleration(const Eigen::VectorXd& v, const std::vector<double>& timestamps) {
  const Eigen::Index T = v.size();
  Eigen::VectorXd a = Eigen::VectorXd::Zero(T);
  for (Eigen::Index t = 1; t < T; ++t)
    a(t) = (v(t) - v(t - 1)) /
           (timestamps[static_cast<std::size_t>(t)] - timestamps[static_cast<std::size_t>(t - 1)]);
  if (T >= 2) a(0) = a(1);
  return a;
}

ObservationSeries ingest_fcd_table(const CsvTable& table, const FcdSchema& schema,
                                   const std::string& source) {
  const std::size_t c_time = table.require_column(schema.time, source);
  const std::size_t c_v = table.require_column(schema.v, source);
  const std::size_t c_dv = table.require_column(schema.dv, source);
  const std::size_t c_h = table.require_column(schema.h, source);
  std::optional<std::size_t> c_a;
  if (schema.a) c_a = table.require_column(*schema.a, source);

  const auto T = static_cast<Eigen::Index>(table.rows.size());
  if (T < 2) throw InputError(source + ": need at least 2 data rows");
  std::vector<double> ts(static_cast<std::size_t>(T));
  Eigen::VectorXd v(T), dv(T), h(T), a(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& row = table.rows[static_cast<std::size_t>(t)];
    const std::string where = source + ": row " + std::to_string(t + 2);
    auto cell = [&](std::size_t c, const std::string& name) {
      if (c >= row.size()) throw InputError(where + ": missing column " + name);
      auto x = parse_number(row[c]);
      if (!x) throw InputError(where + ": missing or invalid value in column " + name);
      return *x;
    };
    ts[static_cast<std::size_t>(t)] = cell(c_time, schema.time);
    v(t) = cell(c_v, schema.v);
    dv(t) = cell(c_dv, schema.dv);
    h(t) = cell(c_h, schema.h);
    if (c_a) a(t) = cell(*c_a, *schema.a);
    if (t > 0 && !(ts[static_cast<std::size_t>(t)] > ts[static_cast<std::size_t>(t - 1)]))
      throw InputError(where + ": time is not strictly increasing");
    if (!(h(t) > 0.0)) throw InputError(where + ": non-positive gap " + format_short(h(t)));
  }

  ObservationSeries s;
  s.channels = {std::string(kVelocity), std::string(kAcceleration), std::string(kSpeedDifference),
                std::string(kGap)};
  s.units = {"m/s", "m/s^2", "m/s", "m"};
  s.sample_interval = median_spacing(ts);
  s.timestamps = ts;
  if (!c_a) {
    // Uniform spacing: divide by the sample interval itself.
    a = Eigen::VectorXd::Zero(T);
    for (Eigen::Index t = 1; t < T; ++t) a(t) = (v(t) - v(t - 1)) / s.sample_interval;
    a(0) = a(1);
  }
  s.data.resize(T, 4);
  s.data.col(0) = v;
  s.data.col(1) = a;
  s.data.col(2) = dv;
  s.data.col(3) = h;
  s.source = source;
  s.validate();
  return s;
}

ObservationSeries ingest_fcd_csv(const std::filesystem::path& path, const FcdSchema& schema) {
  return ingest_fcd_table(read_csv(path), schema, path.string());
}

double parse_timestamp(std::string_view text) {
  if (auto x = parse_number(text)) return *x;
  const std::string s(text);
  int Y = 0, Mo = 0, D = 0, h = 0, mi = 0, consumed = 0;
  double sec = 0.0;
  char sep = 0;
  if (std::sscanf(s.c_str(), "%4d-%2d-%2d%c%2d:%2d:%lf%n", &Y, &Mo, &D, &sep, &h, &mi, &sec,
                  &consumed) < 7 ||
      (sep != 'T' && sep != ' ') || Mo < 1 || Mo > 12 || D < 1 || D > 31 || h > 23 || mi > 59 ||
      sec < 0.0 || sec >= 61.0)
    throw InputError("cannot parse timestamp '" + s + "'");
  double offset = 0.0;
  std::string_view rest = std::string_view(s).substr(static_cast<std::size_t>(consumed));
  if (rest == "Z" || rest.empty()) {
    offset = 0.0;
  } else if (rest.size() >= 3 && (rest[0] == '+' || rest[0] == '-')) {
    int oh = 0, om = 0;
    const std::string r(rest.substr(1));
    if (std::sscanf(r.c_str(), "%2d:%2d", &oh, &om) < 1 &&
        std::sscanf(r.c_str(), "%2d%2d", &oh, &om) < 1)
      throw InputError("bad timezone offset in '" + s + "'");
    offset = (rest[0] == '+' ? 1.0 : -1.0) * (oh * 3600.0 + om * 60.0);
  } else {
    throw InputError("cannot parse timestamp '" + s + "'");
  }
  const long long days = days_from_civil(Y, static_cast<unsigned>(Mo), static_cast<unsigned>(D));
  return static_cast<double>(days) * 86400.0 + h * 3600.0 + mi * 60.0 + sec - offset;
}

std::vector<SensorLogRecord> read_sensor_log(const CsvTable& table, const SensorLogSchema& schema,
                                             const std::string& source) {
  if (table.rows.empty()) throw InputError(source + ": log is empty");
  const std::size_t c_ts = table.require_column(schema.timestamp, source);
  const std::size_t c_lat = table.require_column(schema.lat, source);
  const std::size_t c_lon = table.require_column(schema.lon, source);
  const std::size_t c_speed = table.require_column(schema.speed, source);
  const auto c_heading = table.column(schema.heading);

  std::vector<SensorLogRecord> log;
  log.reserve(table.rows.size());
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::string where = source + ": row " + std::to_string(i + 2);
    auto get = [&](std::size_t c) -> std::string_view {
      if (c >= row.size()) throw InputError(where + ": too few columns");
      return row[c];
    };
    SensorLogRecord rec;
    try {
      rec.point.timestamp = parse_timestamp(get(c_ts));
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
    auto lat = parse_number(get(c_lat));
    auto lon = parse_number(get(c_lon));
    if (!lat || !lon) throw InputError(where + ": missing coordinates");
    rec.point.lat = *lat;
    rec.point.lon = *lon;
    try {
      check_coordinates(rec.point);
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
    if (auto sp = parse_number(get(c_speed)); sp && *sp >= 0.0) rec.speed = *sp;
    if (c_heading && *c_heading < row.size())
      if (auto hd = parse_number(row[*c_heading]); hd && *hd >= 0.0) rec.heading = *hd;
    if (!log.empty() && !(rec.point.timestamp > log.back().point.timestamp))
      throw InputError(where + ": timestamps not strictly increasing");
    log.push_back(rec);
  }
  // Fill missing speeds from the distance between neighbouring fixes.
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log[i].speed) continue;
    if (log.size() < 2) {
      log[i].speed = 0.0;
      continue;
    }
    const std::size_t j = i == 0 ? 1 : i - 1;
    const double dt = std::abs(log[i].point.timestamp - log[j].point.timestamp);
    log[i].speed = haversine_distance(log[i].point, log[j].point) / dt;
  }
  return log;
}

std::vector<SensorLogRecord> read_sensor_log(const std::filesystem::path& path,
                                             const SensorLogSchema& schema) {
  return read_sensor_log(read_csv(path), schema, path.string());
}

ObservationSeries ingest_smartphone_pair(const std::vector<SensorLogRecord>& leader,
                                         const std::vector<SensorLogRecord>& follower,
                                         const AlignConfig& config) {
  if (leader.empty()) throw InputError("leader log is empty");
  if (follower.empty()) throw InputError("follower log is empty");
  const double step = 1.0 / config.rate_hz;
  const double start = follower.front().point.timestamp;
  const double stop = follower.back().point.timestamp;
  const auto n_grid = static_cast<long>(std::floor((stop - start) / step + 1e-9)) + 1;

  std::vector<double> ts;
  std::vector<double> v, lead_speed, gap;
  for (long k = 0; k < n_grid; ++k) {
    const double t = start + static_cast<double>(k) * step;
    const long fi = nearest_record(follower, t, config.tolerance);
    const long li = nearest_record(leader, t, config.tolerance);
    if (fi < 0 || li < 0) continue;
    const auto& f = follower[static_cast<std::size_t>(fi)];
    const auto& l = leader[static_cast<std::size_t>(li)];
    ts.push_back(t);
    v.push_back(*f.speed);
    lead_speed.push_back(*l.speed);
    gap.push_back(haversine_distance(l.point, f.point));
  }
  if (ts.size() < 10)
    throw InputError("insufficient overlap between leader and follower logs: " +
                     std::to_string(ts.size()) + " aligned rows (need >= 10)");

  const auto T = static_cast<Eigen::Index>(ts.size());
  Eigen::VectorXd vv = Eigen::Map<Eigen::VectorXd>(v.data(), T);
  Eigen::VectorXd lv = Eigen::Map<Eigen::VectorXd>(lead_speed.data(), T);
  Eigen::VectorXd hh = Eigen::Map<Eigen::VectorXd>(gap.data(), T);
  vv = moving_average(vv, config.smoothing_window);
  lv = moving_average(lv, config.smoothing_window);
  hh = moving_average(hh, config.smoothing_window);

  ObservationSeries s;
  s.channels = {std::string(kVelocity), std::string(kAcceleration), std::string(kSpeedDifference),
                std::string(kGap)};
  s.units = {"m/s", "m/s^2", "m/s", "m"};
  s.sample_interval = step;
  s.timestamps = ts;
  s.data.resize(T, 4);
  s.data.col(0) = vv;
  s.data.col(1) = derive_acceleration(vv, ts);
  s.data.col(2) = lv - vv;
  s.data.col(3) = hh;
  s.source = "smartphone pair";
  const auto bad_gap = (hh.array() <= 0.0).count();
  if (bad_gap > 0)
    s.flags.push_back("non-positive gap in " + std::to_string(bad_gap) +
                      " rows; series will be rejected by model fitting");
  s.validate(false);
  return s;
}

ObservationSeries ingest_smartphone_pair(const std::filesystem::path& leader_log,
                                         const std::filesystem::path& follower_log,
                                         const SensorLogSchema& schema, const AlignConfig& config) {
  auto out = ingest_smartphone_pair(read_sensor_log(leader_log, schema),
                                    read_sensor_log(follower_log, schema), config);
  out.source = "leader=" + leader_log.string() + ";follower=" + follower_log.string();
  return out;
}

}  // namespace msvar
