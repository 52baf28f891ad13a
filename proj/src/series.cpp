#include "msvar/series.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "msvar/csv.hpp"
#include "msvar/error.hpp"

namespace msvar {

std::optional<Eigen::Index> ObservationSeries::channel_index(std::string_view name) const {
  for (std::size_t i = 0; i < channels.size(); ++i)
    if (channels[i] == name) return static_cast<Eigen::Index>(i);
  return std::nullopt;
}

void ObservationSeries::validate(bool require_positive_gap) const {
  const Eigen::Index T = length();
  const Eigen::Index N = n_channels();
  if (T < 2) throw InputError("series needs at least 2 rows, has " + std::to_string(T));
  if (N < 1) throw InputError("series has no channels");
  if (static_cast<Eigen::Index>(channels.size()) != N)
    throw InputError("channel name count does not match data columns");
  if (static_cast<Eigen::Index>(timestamps.size()) != T)
    throw InputError("timestamp count does not match row count");
  if (!(sample_interval > 0.0) || !std::isfinite(sample_interval))
    throw InputError("sample interval must be positive");
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index n = 0; n < N; ++n)
      if (!std::isfinite(data(t, n)))
        throw InputError("non-finite value at row " + std::to_string(t) + ", channel " +
                         channels[static_cast<std::size_t>(n)]);
    if (t > 0 && !(timestamps[t] > timestamps[t - 1]))
      throw InputError("timestamps not strictly increasing at row " + std::to_string(t));
  }
  if (require_positive_gap) {
    if (auto h = channel_index(kGap)) {
      for (Eigen::Index t = 0; t < T; ++t)
        if (!(data(t, *h) > 0.0))
          throw InputError("gap channel h must be strictly positive (row " + std::to_string(t) +
                           ")");
    }
  }
}

ObservationSeries ObservationSeries::slice(Eigen::Index first, Eigen::Index count) const {
  if (first < 0 || count < 0 || first + count > length())
    throw IndexError("series slice out of range");
  ObservationSeries out = *this;
  out.data = data.middleRows(first, count);
  out.timestamps.assign(timestamps.begin() + first, timestamps.begin() + first + count);
  return out;
}

ObservationSeries make_series(const Eigen::MatrixXd& data, double sample_interval,
                              std::vector<std::string> channels) {
  ObservationSeries s;
  s.data = data;
  s.sample_interval = sample_interval;
  if (channels.empty())
    for (Eigen::Index n = 0; n < data.cols(); ++n) channels.push_back("y" + std::to_string(n + 1));
  s.channels = std::move(channels);
  s.units.assign(s.channels.size(), "");
  s.timestamps.resize(static_cast<std::size_t>(data.rows()));
  for (Eigen::Index t = 0; t < data.rows(); ++t)
    s.timestamps[static_cast<std::size_t>(t)] = static_cast<double>(t) * sample_interval;
  s.source = "memory";
  return s;
}

std::string series_to_csv(const ObservationSeries& series) {
  std::string out = "t";
  for (const auto& c : series.channels) out += "," + c;
  out += "\n";
  for (Eigen::Index t = 0; t < series.length(); ++t) {
    out += format_exact(series.timestamps[static_cast<std::size_t>(t)]);
    for (Eigen::Index n = 0; n < series.n_channels(); ++n) {
      out += ",";
      out += format_exact(series.data(t, n));
    }
    out += "\n";
  }
  return out;
}

std::string series_metadata_json(const ObservationSeries& series) {
  nlohmann::json meta;
  meta["sample_interval"] = series.sample_interval;
  meta["t0"] = series.t0();
  meta["rows"] = series.length();
  meta["channels"] = series.channels;
  meta["units"] = series.units;
  meta["source"] = series.source;
  meta["flags"] = series.flags;
  return meta.dump(2) + "\n";
}

void write_series(const ObservationSeries& series, const std::filesystem::path& csv_path) {
  write_text_file(csv_path, series_to_csv(series));
  auto meta_path = csv_path;
  meta_path.replace_extension(".json");
  write_text_file(meta_path, series_metadata_json(series));
}

ObservationSeries read_series(const std::filesystem::path& csv_path) {
  CsvTable table = read_csv(csv_path);
  const std::string name = csv_path.string();
  if (table.header.empty() || table.header.front() != "t")
    throw InputError(name + ": canonical series must start with column 't'");
  ObservationSeries s;
  s.channels.assign(table.header.begin() + 1, table.header.end());
  const auto N = static_cast<Eigen::Index>(s.channels.size());
  const auto T = static_cast<Eigen::Index>(table.rows.size());
  s.data.resize(T, N);
  s.timestamps.resize(static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& row = table.rows[static_cast<std::size_t>(t)];
    if (static_cast<Eigen::Index>(row.size()) != N + 1)
      throw InputError(name + ": row " + std::to_string(t + 2) + " has wrong column count");
    auto ts = parse_number(row[0]);
    if (!ts) throw InputError(name + ": bad timestamp at row " + std::to_string(t + 2));
    s.timestamps[static_cast<std::size_t>(t)] = *ts;
    for (Eigen::Index n = 0; n < N; ++n) {
      auto v = parse_number(row[static_cast<std::size_t>(n + 1)]);
      if (!v)
        throw InputError(name + ": missing value at row " + std::to_string(t + 2) + ", column " +
                         s.channels[static_cast<std::size_t>(n)]);
      s.data(t, n) = *v;
    }
  }
  s.units.assign(s.channels.size(), "");
  s.source = name;
  auto meta_path = csv_path;
  meta_path.replace_extension(".json");
  if (std::filesystem::exists(meta_path)) {
    auto meta = nlohmann::json::parse(read_text_file(meta_path));
    s.sample_interval = meta.value("sample_interval", 1.0);
    if (meta.contains("units")) s.units = meta["units"].get<std::vector<std::string>>();
    if (meta.contains("flags")) s.flags = meta["flags"].get<std::vector<std::string>>();
    s.source = meta.value("source", s.source);
  } else if (T >= 2) {
    s.sample_interval = s.timestamps[1] - s.timestamps[0];
  }
  return s;
}

ObservationSeries resample(const ObservationSeries& series, double new_interval) {
  if (!(new_interval > 0.0)) throw ConfigError("resample interval must be positive");
  const double ratio = new_interval / series.sample_interval;
  const double stride_d = std::round(ratio);
  if (stride_d < 1.0 || std::abs(ratio - stride_d) > 1e-9 * std::max(1.0, ratio))
    throw ConfigError("resample interval " + format_short(new_interval) +
                      " is not an integer multiple of " + format_short(series.sample_interval));
  const auto stride = static_cast<Eigen::Index>(stride_d);
  const Eigen::Index T = (series.length() + stride - 1) / stride;
  ObservationSeries out = series;
  out.data.resize(T, series.n_channels());
  out.timestamps.resize(static_cast<std::size_t>(T));
  for (Eigen::Index k = 0; k < T; ++k) {
    out.data.row(k) = series.data.row(k * stride);
    out.timestamps[static_cast<std::size_t>(k)] = series.timestamps[static_cast<std::size_t>(k * stride)];
  }
  out.sample_interval = new_interval;
  return out;
}

}  // namespace msvar
