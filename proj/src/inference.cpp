#include "msvar/inference.hpp"

#include <cmath>

#include "msvar/csv.hpp"
#include "msvar/diagnostics.hpp"
#include "msvar/error.hpp"

namespace msvar {
namespace {
constexpr double kProbabilityFloor = 1e-300;
}

RegimeProbabilities hamilton_filter(const Eigen::MatrixXd& log_density, const ModelParams& params) {
  const Eigen::Index rows = log_density.rows();
  const int M = params.n_regimes();
  if (log_density.cols() != M) throw InputError("density table does not match regime count");
  if (rows < 1) throw InputError("insufficient data: no rows after the lag order");
  RegimeProbabilities out;
  out.offset = params.lags();
  out.filtered.resize(rows, M);
  out.predicted.resize(rows, M);
  const Eigen::MatrixXd Pt = params.transition.transpose();
  double loglik = 0.0;
  Eigen::VectorXd pred = params.initial_dist;
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (r > 0) pred.noalias() = Pt * out.filtered.row(r - 1).transpose();
    out.predicted.row(r) = pred.transpose();
    const double peak = log_density.row(r).maxCoeff();
    if (!std::isfinite(peak))
      throw NumericalError("all regime densities underflow at t=" + std::to_string(out.offset + r));
    Eigen::VectorXd joint = pred.array() * (log_density.row(r).transpose().array() - peak).exp();
    const double norm = joint.sum();
    if (!(norm >= kProbabilityFloor) || !std::isfinite(norm))
      throw NumericalError("likelihood contribution underflows at t=" + std::to_string(out.offset + r));
    out.filtered.row(r) = (joint / norm).transpose();
    loglik += peak + std::log(norm);
  }
  out.log_likelihood = loglik;
  return out;
}

RegimeProbabilities hamilton_filter(const ObservationSeries& series, const ModelParams& params) {
  return hamilton_filter(log_density_table(series, params), params);
}

void smooth(RegimeProbabilities& probs, const ModelParams& params) {
  const Eigen::Index rows = probs.rows();
  const int M = params.n_regimes();
  const auto& P = params.transition;
  probs.smoothed.resize(rows, M);
  probs.pairwise.assign(static_cast<std::size_t>(std::max<Eigen::Index>(rows - 1, 0)),
                        Eigen::MatrixXd::Zero(M, M));
  probs.smoothed.row(rows - 1) = probs.filtered.row(rows - 1);
  bool floored = false;
  Eigen::VectorXd ratio(M);
  for (Eigen::Index r = rows - 2; r >= 0; --r) {
    for (int j = 0; j < M; ++j) {
      double denom = probs.predicted(r + 1, j);
      if (denom < kProbabilityFloor) {
        if (probs.smoothed(r + 1, j) > 0.0) floored = true;
        denom = kProbabilityFloor;
      }
      ratio(j) = probs.smoothed(r + 1, j) / denom;
    }
    auto& joint = probs.pairwise[static_cast<std::size_t>(r)];
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < M; ++j) joint(i, j) = probs.filtered(r, i) * P(i, j) * ratio(j);
    Eigen::VectorXd row = joint.rowwise().sum();
    const double total = row.sum();
    if (total > 0.0) {
      probs.smoothed.row(r) = (row / total).transpose();
      joint /= total;
    } else {
      probs.smoothed.row(r) = probs.filtered.row(r);
    }
  }
  if (floored) {
    std::string msg = "smoother: predicted probability below 1e-300 was floored";
    probs.warnings.push_back(msg);
    warn(msg);
  }
}

RegimeProbabilities infer_regimes(const ObservationSeries& series, const ModelParams& params) {
  auto probs = hamilton_filter(series, params);
  smooth(probs, params);
  return probs;
}

std::vector<int> classify(const Eigen::MatrixXd& smoothed) {
  std::vector<int> out(static_cast<std::size_t>(smoothed.rows()));
  for (Eigen::Index r = 0; r < smoothed.rows(); ++r) {
    int best = 0;
    for (Eigen::Index m = 1; m < smoothed.cols(); ++m)
      if (smoothed(r, m) > smoothed(r, best)) best = static_cast<int>(m);
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

double expected_duration(const Eigen::MatrixXd& transition, int regime) {
  const double stay = transition(regime, regime);
  if (stay >= 1.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (1.0 - stay);
}

double duration_probability(double stay_probability, int k) {
  if (k < 1) return 0.0;
  return std::pow(stay_probability, k - 1) * (1.0 - stay_probability);
}

RegimeReport regime_report(const std::vector<int>& classification, const Eigen::MatrixXd& transition,
                           double sample_interval) {
  const int M = static_cast<int>(transition.rows());
  RegimeReport rep;
  rep.sample_interval = sample_interval;
  rep.regimes.resize(static_cast<std::size_t>(M));
  rep.total_observations = static_cast<int>(classification.size());
  for (std::size_t t = 0; t < classification.size(); ++t) {
    const int s = classification[t];
    if (s < 0 || s >= M) throw InputError("classification refers to unknown regime " + std::to_string(s + 1));
    auto& st = rep.regimes[static_cast<std::size_t>(s)];
    ++st.observations;
    if (t == 0 || classification[t - 1] != s) ++st.occurrences;
  }
  for (int m = 0; m < M; ++m) {
    auto& st = rep.regimes[static_cast<std::size_t>(m)];
    st.expected_duration_steps = expected_duration(transition, m);
    st.expected_duration_seconds = st.expected_duration_steps * sample_interval;
    st.percentage = rep.total_observations > 0
                        ? 100.0 * st.observations / static_cast<double>(rep.total_observations)
                        : 0.0;
  }
  return rep;
}

nlohmann::json report_to_json(const RegimeReport& report) {
  nlohmann::json j;
  j["total_observations"] = report.total_observations;
  j["sample_interval"] = report.sample_interval;
  j["duration_units"] = {"steps", "seconds"};
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t m = 0; m < report.regimes.size(); ++m) {
    const auto& st = report.regimes[m];
    nlohmann::json r;
    r["regime"] = m + 1;
    // JSON has no infinity; an absorbing regime reports null.
    if (std::isfinite(st.expected_duration_steps)) {
      r["expected_duration_steps"] = st.expected_duration_steps;
      r["expected_duration_seconds"] = st.expected_duration_seconds;
    } else {
      r["expected_duration_steps"] = nullptr;
      r["expected_duration_seconds"] = nullptr;
    }
    r["occurrence"] = st.occurrences;
    r["observations"] = st.observations;
    r["percentage"] = st.percentage;
    rows.push_back(r);
  }
  j["regimes"] = rows;
  return j;
}

std::string report_to_csv(const RegimeReport& report) {
  std::string out =
      "regime,expected_duration_steps,expected_duration_seconds,occurrence,observations,percentage\n";
  for (std::size_t m = 0; m < report.regimes.size(); ++m) {
    const auto& st = report.regimes[m];
    out += std::to_string(m + 1) + "," + format_exact(st.expected_duration_steps) + "," +
           format_exact(st.expected_duration_seconds) + "," + std::to_string(st.occurrences) + "," +
           std::to_string(st.observations) + "," + format_exact(st.percentage) + "\n";
  }
  return out;
}

std::string probabilities_to_csv(const RegimeProbabilities& probs, const std::vector<int>& classification,
                                 const std::vector<double>& timestamps) {
  const Eigen::Index M = probs.smoothed.cols();
  std::string out = "t,regime";
  for (Eigen::Index m = 0; m < M; ++m) out += ",xi_" + std::to_string(m + 1);
  out += "\n";
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const auto t = static_cast<std::size_t>(probs.offset + r);
    out += format_exact(t < timestamps.size() ? timestamps[t] : static_cast<double>(t));
    out += "," + std::to_string(classification[static_cast<std::size_t>(r)] + 1);
    for (Eigen::Index m = 0; m < M; ++m) out += "," + format_exact(probs.smoothed(r, m));
    out += "\n";
  }
  return out;
}

}  // namespace msvar
