#include "msvar/forecast.hpp"

#include <algorithm>
#include <cmath>

#include "msvar/csv.hpp"
#include "msvar/error.hpp"
#include "msvar/inference.hpp"

namespace msvar {
namespace {

struct RegimeSystem {
  Eigen::VectorXd offset;  // Np
  Eigen::MatrixXd companion;  // Np x Np
  Eigen::MatrixXd noise;  // Np x Np
};

std::vector<RegimeSystem> regime_systems(const ModelParams& params) {
  const Eigen::Index N = params.n_channels();
  const int p = params.lags();
  const Eigen::Index dim = N * std::max(p, 1);
  std::vector<RegimeSystem> out(static_cast<std::size_t>(params.n_regimes()));
  for (int m = 0; m < params.n_regimes(); ++m) {
    auto& sys = out[static_cast<std::size_t>(m)];
    sys.offset = Eigen::VectorXd::Zero(dim);
    sys.offset.head(N) = params.intercepts.row(m).transpose();
    sys.companion = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < p; ++i)
      sys.companion.block(0, static_cast<Eigen::Index>(i) * N, N, N) = params.coeffs[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
    if (p > 1) sys.companion.block(N, 0, N * (p - 1), N * (p - 1)).setIdentity();
    sys.noise = Eigen::MatrixXd::Zero(dim, dim);
    sys.noise.topLeftCorner(N, N) = params.covariances[static_cast<std::size_t>(m)];
  }
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double mixture_quantile(const Eigen::VectorXd& w, const Eigen::VectorXd& mu, const Eigen::VectorXd& sd, double q) {
  auto cdf = [&](double x) {
    double c = 0.0;
    for (Eigen::Index m = 0; m < w.size(); ++m) {
      if (w(m) <= 0.0) continue;
      c += w(m) * (sd(m) > 0.0 ? normal_cdf((x - mu(m)) / sd(m)) : (x >= mu(m) ? 1.0 : 0.0));
    }
    return c;
  };
  double lo = (mu.array() - 12.0 * sd.array()).minCoeff() - 1e-12;
  double hi = (mu.array() + 12.0 * sd.array()).maxCoeff() + 1e-12;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < q ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

void fill_intervals(ForecastStep& step, double level) {
  const Eigen::Index N = step.means.cols();
  const Eigen::Index M = step.means.rows();
  step.lower.resize(N);
  step.upper.resize(N);
  const double alpha = 1.0 - level;
  for (Eigen::Index n = 0; n < N; ++n) {
    Eigen::VectorXd mu = step.means.col(n);
    Eigen::VectorXd sd(M);
    for (Eigen::Index m = 0; m < M; ++m) sd(m) = std::sqrt(std::max(step.covariances[static_cast<std::size_t>(m)](n, n), 0.0));
    step.lower(n) = mixture_quantile(step.weights, mu, sd, alpha / 2.0);
    step.upper(n) = mixture_quantile(step.weights, mu, sd, 1.0 - alpha / 2.0);
  }
}

Eigen::VectorXd initial_state(const Eigen::MatrixXd& history, const ModelParams& params) {
  const Eigen::Index N = params.n_channels();
  const int p = params.lags();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(N * std::max(p, 1));
  for (int i = 0; i < p; ++i) x.segment(static_cast<Eigen::Index>(i) * N, N) = history.row(history.rows() - 1 - i).transpose();
  return x;
}

void plug_in(const std::vector<RegimeSystem>& systems, const ModelParams& params, Eigen::VectorXd weights,
             Eigen::VectorXd x, Forecast& out, int horizon) {
  const Eigen::Index N = params.n_channels();
  const int M = params.n_regimes();
  const Eigen::Index dim = x.size();
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(dim, dim);
  const Eigen::MatrixXd Pt = params.transition.transpose();
  for (int h = 1; h <= horizon; ++h) {
    weights = Pt * weights;
    ForecastStep step;
    step.weights = weights;
    step.means.resize(M, N);
    step.covariances.resize(static_cast<std::size_t>(M));
    std::vector<Eigen::VectorXd> mx(static_cast<std::size_t>(M));
    std::vector<Eigen::MatrixXd> cx(static_cast<std::size_t>(M));
    Eigen::VectorXd next = Eigen::VectorXd::Zero(dim);
    for (int m = 0; m < M; ++m) {
      const auto& sys = systems[static_cast<std::size_t>(m)];
      mx[static_cast<std::size_t>(m)] = sys.offset + sys.companion * x;
      cx[static_cast<std::size_t>(m)] = sys.companion * C * sys.companion.transpose() + sys.noise;
      step.means.row(m) = mx[static_cast<std::size_t>(m)].head(N).transpose();
      step.covariances[static_cast<std::size_t>(m)] = cx[static_cast<std::size_t>(m)].topLeftCorner(N, N);
      next += weights(m) * mx[static_cast<std::size_t>(m)];
    }
    Eigen::MatrixXd next_cov = Eigen::MatrixXd::Zero(dim, dim);
    for (int m = 0; m < M; ++m) {
      const Eigen::VectorXd d = mx[static_cast<std::size_t>(m)] - next;
      next_cov += weights(m) * (cx[static_cast<std::size_t>(m)] + d * d.transpose());
    }
    step.point = step.means.transpose() * weights;
    out.steps.push_back(std::move(step));
    x = next;
    C = next_cov;
  }
}

// Intervals are taken from the full path mixture; the reported per-regime
// components are its moment-matched collapse.
void exact_paths(const std::vector<RegimeSystem>& systems, const ModelParams& params, const Eigen::VectorXd& filtered,
                 const Eigen::VectorXd& x0, Forecast& out, int horizon, double interval) {
  struct Path {
    int regime;
    double weight;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
  };
  const Eigen::Index N = params.n_channels();
  const int M = params.n_regimes();
  const Eigen::Index dim = x0.size();
  const Eigen::VectorXd first = params.transition.transpose() * filtered;
  std::vector<Path> level;
  for (int m = 0; m < M; ++m) {
    const auto& sys = systems[static_cast<std::size_t>(m)];
    level.push_back({m, first(m), sys.offset + sys.companion * x0, sys.noise});
  }
  for (int h = 1; h <= horizon; ++h) {
    if (h > 1) {
      std::vector<Path> next;
      next.reserve(level.size() * static_cast<std::size_t>(M));
      for (const auto& parent : level)
        for (int m = 0; m < M; ++m) {
          const auto& sys = systems[static_cast<std::size_t>(m)];
          next.push_back({m, parent.weight * params.transition(parent.regime, m),
                          sys.offset + sys.companion * parent.mean,
                          sys.companion * parent.cov * sys.companion.transpose() + sys.noise});
        }
      level = std::move(next);
    }
    ForecastStep step;
    step.weights = Eigen::VectorXd::Zero(M);
    step.means = Eigen::MatrixXd::Zero(M, N);
    step.covariances.assign(static_cast<std::size_t>(M), Eigen::MatrixXd::Zero(N, N));
    for (const auto& path : level) {
      step.weights(path.regime) += path.weight;
      step.means.row(path.regime) += path.weight * path.mean.head(N).transpose();
    }
    for (int m = 0; m < M; ++m)
      if (step.weights(m) > 0.0) step.means.row(m) /= step.weights(m);
    for (const auto& path : level) {
      if (step.weights(path.regime) <= 0.0) continue;
      const Eigen::VectorXd d = path.mean.head(N) - step.means.row(path.regime).transpose();
      step.covariances[static_cast<std::size_t>(path.regime)] +=
          path.weight / step.weights(path.regime) * (path.cov.topLeftCorner(N, N) + d * d.transpose());
    }
    for (int m = 0; m < M; ++m)
      if (step.weights(m) <= 0.0)
        step.covariances[static_cast<std::size_t>(m)] = systems[static_cast<std::size_t>(m)].noise.topLeftCorner(N, N);
    step.point = step.means.transpose() * step.weights;
    const auto K = static_cast<Eigen::Index>(level.size());
    Eigen::VectorXd w(K), mu(K), sd(K);
    step.lower.resize(N);
    step.upper.resize(N);
    for (Eigen::Index n = 0; n < N; ++n) {
      for (Eigen::Index k = 0; k < K; ++k) {
        const auto& path = level[static_cast<std::size_t>(k)];
        w(k) = path.weight;
        mu(k) = path.mean(n);
        sd(k) = std::sqrt(std::max(path.cov(n, n), 0.0));
      }
      step.lower(n) = mixture_quantile(w, mu, sd, (1.0 - interval) / 2.0);
      step.upper(n) = mixture_quantile(w, mu, sd, 1.0 - (1.0 - interval) / 2.0);
    }
    out.steps.push_back(std::move(step));
  }
  (void)dim;
}

}  // namespace

Forecast forecast_from(const Eigen::MatrixXd& history, const Eigen::VectorXd& filtered_last,
                       const ModelParams& params, int horizon, const ForecastOptions& options,
                       std::vector<std::string> channels) {
  if (horizon < 1) throw ConfigError("forecast horizon must be >= 1");
  if (!(options.interval_level > 0.0 && options.interval_level < 1.0))
    throw ConfigError("interval level must lie in (0, 1)");
  if (options.exact_mixture && horizon > kMaxExactHorizon)
    throw ConfigError("exact mixture forecasts are limited to horizon <= " + std::to_string(kMaxExactHorizon));
  if (history.rows() < params.lags()) throw InputError("history shorter than the lag order");
  if (history.cols() != params.n_channels()) throw InputError("history has the wrong channel count");
  Forecast out;
  if (channels.empty())
    for (Eigen::Index n = 0; n < params.n_channels(); ++n) channels.push_back("y" + std::to_string(n + 1));
  out.channels = std::move(channels);
  out.interval_level = options.interval_level;
  out.exact = options.exact_mixture;
  const auto systems = regime_systems(params);
  const Eigen::VectorXd x0 = initial_state(history, params);
  if (options.exact_mixture)
    exact_paths(systems, params, filtered_last, x0, out, horizon, options.interval_level);
  else
    plug_in(systems, params, filtered_last, x0, out, horizon);
  for (auto& step : out.steps) {
    if (!step.point.allFinite() || !step.means.allFinite())
      throw NumericalError("forecast became non-finite; check coefficient stability");
    if (!options.exact_mixture) fill_intervals(step, options.interval_level);
  }
  return out;
}

Forecast forecast(const ObservationSeries& series, const ModelParams& params, int horizon,
                  const ForecastOptions& options) {
  const auto probs = hamilton_filter(series, params);
  return forecast_from(series.data, probs.filtered.row(probs.rows() - 1).transpose(), params, horizon, options,
                       series.channels);
}

double ChannelErrors::total() const {
  double s = 0.0;
  for (double v : mse) s += v;
  return s;
}

std::vector<Eigen::Index> report_channel_order(const std::vector<std::string>& channels) {
  auto find = [&](std::string_view name) -> Eigen::Index {
    for (std::size_t i = 0; i < channels.size(); ++i)
      if (channels[i] == name) return static_cast<Eigen::Index>(i);
    return -1;
  };
  const Eigen::Index a = find(kAcceleration), dv = find(kSpeedDifference), h = find(kGap), v = find(kVelocity);
  if (channels.size() == 4 && a >= 0 && dv >= 0 && h >= 0 && v >= 0) return {a, dv, h, v};
  std::vector<Eigen::Index> order(channels.size());
  for (std::size_t i = 0; i < channels.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  return order;
}

ChannelErrors evaluate_mse(const Forecast& fc, const Eigen::MatrixXd& actual) {
  if (actual.rows() != fc.horizon())
    throw InputError("held-out rows (" + std::to_string(actual.rows()) + ") do not match horizon " +
                     std::to_string(fc.horizon()));
  if (fc.horizon() == 0 || actual.cols() != fc.steps.front().point.size())
    throw InputError("held-out data has a channel mismatch");
  const auto order = report_channel_order(fc.channels);
  ChannelErrors out;
  for (Eigen::Index n : order) {
    double s = 0.0;
    for (int h = 0; h < fc.horizon(); ++h) {
      const double e = fc.steps[static_cast<std::size_t>(h)].point(n) - actual(h, n);
      s += e * e;
    }
    out.channels.push_back(fc.channels[static_cast<std::size_t>(n)]);
    out.mse.push_back(s / fc.horizon());
  }
  return out;
}

ComparisonTable compare_models(const ObservationSeries& series, const std::vector<NamedModel>& models,
                               int horizon, const ForecastOptions& options) {
  if (models.size() < 2) throw ConfigError("model comparison needs at least two models");
  if (horizon < 1) throw ConfigError("forecast horizon must be >= 1");
  const Eigen::Index T = series.length();
  for (const auto& nm : models)
    if (horizon >= T - nm.params.lags())
      throw InputError("horizon " + std::to_string(horizon) + " leaves no estimation rows for model " + nm.name);
  const ObservationSeries prefix = series.slice(0, T - horizon);
  const Eigen::MatrixXd tail = series.data.bottomRows(horizon);
  ComparisonTable table;
  table.horizon = horizon;
  for (const auto& nm : models) {
    const auto fc = forecast(prefix, nm.params, horizon, options);
    table.rows.push_back({nm.name, evaluate_mse(fc, tail)});
  }
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const ComparisonRow& a, const ComparisonRow& b) { return a.errors.total() < b.errors.total(); });
  return table;
}

ComparisonTable compare_specs(const ObservationSeries& series, const std::vector<ModelSpec>& specs, int horizon,
                              const EmConfig& config, const ForecastOptions& options) {
  if (specs.size() < 2) throw ConfigError("model comparison needs at least two models");
  const Eigen::Index T = series.length();
  for (const auto& s : specs)
    if (horizon >= T - s.lags) throw InputError("horizon " + std::to_string(horizon) + " is too long for the series");
  const ObservationSeries prefix = series.slice(0, T - horizon);
  std::vector<NamedModel> models;
  for (const auto& s : specs) {
    auto fit = fit_em(prefix, s, config);
    models.push_back({"p=" + std::to_string(s.lags) + ",M=" + std::to_string(s.n_regimes), fit.params});
  }
  return compare_models(series, models, horizon, options);
}

std::string forecast_to_csv(const Forecast& fc) {
  std::string out = "h,channel,point,lo,hi\n";
  for (int h = 0; h < fc.horizon(); ++h) {
    const auto& st = fc.steps[static_cast<std::size_t>(h)];
    for (std::size_t n = 0; n < fc.channels.size(); ++n) {
      const auto i = static_cast<Eigen::Index>(n);
      out += std::to_string(h + 1) + "," + fc.channels[n] + "," + format_exact(st.point(i)) + "," +
             format_exact(st.lower(i)) + "," + format_exact(st.upper(i)) + "\n";
    }
  }
  return out;
}

nlohmann::json forecast_to_json(const Forecast& fc) {
  nlohmann::json j;
  j["channels"] = fc.channels;
  j["interval_level"] = fc.interval_level;
  j["exact_mixture"] = fc.exact;
  nlohmann::json steps = nlohmann::json::array();
  for (int h = 0; h < fc.horizon(); ++h) {
    const auto& st = fc.steps[static_cast<std::size_t>(h)];
    nlohmann::json s;
    s["h"] = h + 1;
    s["weights"] = std::vector<double>(st.weights.data(), st.weights.data() + st.weights.size());
    s["point"] = std::vector<double>(st.point.data(), st.point.data() + st.point.size());
    nlohmann::json comps = nlohmann::json::array();
    for (Eigen::Index m = 0; m < st.means.rows(); ++m) {
      nlohmann::json c;
      c["regime"] = m + 1;
      c["weight"] = st.weights(m);
      Eigen::VectorXd mu = st.means.row(m).transpose();
      c["mean"] = std::vector<double>(mu.data(), mu.data() + mu.size());
      nlohmann::json cov = nlohmann::json::array();
      const auto& S = st.covariances[static_cast<std::size_t>(m)];
      for (Eigen::Index r = 0; r < S.rows(); ++r) {
        Eigen::VectorXd row = S.row(r).transpose();
        cov.push_back(std::vector<double>(row.data(), row.data() + row.size()));
      }
      c["covariance"] = cov;
      comps.push_back(c);
    }
    s["components"] = comps;
    steps.push_back(s);
  }
  j["steps"] = steps;
  return j;
}

std::string comparison_to_csv(const ComparisonTable& table) {
  std::string out = "model";
  if (!table.rows.empty())
    for (const auto& c : table.rows.front().errors.channels) out += "," + c;
  out += ",total\n";
  for (const auto& row : table.rows) {
    out += row.model;
    for (double v : row.errors.mse) out += "," + format_exact(v);
    out += "," + format_exact(row.errors.total()) + "\n";
  }
  return out;
}

nlohmann::json comparison_to_json(const ComparisonTable& table) {
  nlohmann::json j;
  j["horizon"] = table.horizon;
  j["statistic"] = "mean squared error averaged over horizons";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : table.rows) {
    nlohmann::json r;
    r["model"] = row.model;
    for (std::size_t i = 0; i < row.errors.channels.size(); ++i) r["mse"][row.errors.channels[i]] = row.errors.mse[i];
    r["total"] = row.errors.total();
    rows.push_back(r);
  }
  j["models"] = rows;
  return j;
}

std::string plot_data_csv(const ObservationSeries& series, Eigen::Index origin, const Forecast& fc,
                          Eigen::Index context_rows) {
  std::string out = "t,channel,observed,predicted,lo,hi\n";
  const Eigen::Index begin = std::max<Eigen::Index>(0, origin - context_rows);
  const Eigen::Index end = origin + fc.horizon();
  const double dt = series.sample_interval;
  for (std::size_t n = 0; n < series.channels.size(); ++n) {
    const auto c = static_cast<Eigen::Index>(n);
    for (Eigen::Index t = begin; t < end; ++t) {
      const double ts = t < series.length() ? series.timestamps[static_cast<std::size_t>(t)]
                                            : series.timestamps.back() + static_cast<double>(t - series.length() + 1) * dt;
      out += format_exact(ts) + "," + series.channels[n] + ",";
      out += t < series.length() ? format_exact(series.data(t, c)) : std::string();
      if (t >= origin) {
        const auto& st = fc.steps[static_cast<std::size_t>(t - origin)];
        out += "," + format_exact(st.point(c)) + "," + format_exact(st.lower(c)) + "," + format_exact(st.upper(c));
      } else {
        out += ",,,";
      }
      out += "\n";
    }
  }
  return out;
}

}  // namespace msvar
