#include "msvar/simulate.hpp"

#include <cmath>
#include <random>

#include "msvar/csv.hpp"
#include "msvar/error.hpp"

namespace msvar {
namespace {

int draw_categorical(const Eigen::VectorXd& probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  const Eigen::Index last = probs.size() - 1;
  for (Eigen::Index i = 0; i < last; ++i) {
    x -= probs(i);
    if (x < 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(last);
}

}  // namespace

SimOutput simulate(const ModelParams& params, Eigen::Index length, std::uint64_t seed,
                   Eigen::Index burn_in, double sample_interval, std::vector<std::string> channels) {
  if (auto issues = validate(params); !issues.empty()) throw InputError("invalid parameters: " + issues.front());
  if (length < 1) throw ConfigError("simulation length must be >= 1");
  if (burn_in < 0) throw ConfigError("burn-in must be >= 0");
  const int M = params.n_regimes();
  const Eigen::Index N = params.n_channels();
  const int p = params.lags();
  const Eigen::Index total = length + burn_in;

  std::vector<Eigen::MatrixXd> chol(static_cast<std::size_t>(M));
  std::vector<Eigen::MatrixXd> design(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    // Cholesky of the full covariance; a zero covariance gives a
    // deterministic draw.
    const auto& S = params.covariances[static_cast<std::size_t>(m)];
    Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
    Eigen::MatrixXd L = ldlt.matrixL();
    Eigen::VectorXd d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    chol[static_cast<std::size_t>(m)] = ldlt.transpositionsP().transpose() * (L * d.asDiagonal());
    design[static_cast<std::size_t>(m)] = params.design(m);
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(total, N);
  std::vector<int> states(static_cast<std::size_t>(total));
  Eigen::VectorXd z(params.spec.regressor_count());
  Eigen::VectorXd noise(N);
  int s = draw_categorical(params.initial_dist, rng);
  for (Eigen::Index t = 0; t < total; ++t) {
    if (t > 0) s = draw_categorical(params.transition.row(s).transpose(), rng);
    states[static_cast<std::size_t>(t)] = s;
    z(0) = 1.0;
    for (int i = 1; i <= p; ++i)
      z.segment(1 + static_cast<Eigen::Index>(i - 1) * N, N) =
          t - i >= 0 ? Eigen::VectorXd(y.row(t - i).transpose()) : Eigen::VectorXd::Zero(N);
    for (Eigen::Index n = 0; n < N; ++n) noise(n) = gauss(rng);
    y.row(t) = (design[static_cast<std::size_t>(s)] * z + chol[static_cast<std::size_t>(s)] * noise).transpose();
    if (!y.row(t).allFinite() || y.row(t).cwiseAbs().maxCoeff() > 1e12)
      throw NumericalError("simulation overflowed at step " + std::to_string(t) +
                           "; check the spectral radius of the coefficient matrices");
  }

  SimOutput out;
  out.params = params;
  out.series = make_series(y.bottomRows(length), sample_interval, std::move(channels));
  out.series.source = "simulate(seed=" + std::to_string(seed) + ")";
  out.true_states.assign(states.begin() + burn_in, states.end());
  return out;
}

Eigen::MatrixXd companion_matrix(const ModelParams& params, int regime) {
  const Eigen::Index N = params.n_channels();
  const int p = params.lags();
  if (p == 0) return Eigen::MatrixXd::Zero(N, N);
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(N * p, N * p);
  for (int i = 0; i < p; ++i)
    F.block(0, static_cast<Eigen::Index>(i) * N, N, N) = params.coeffs[static_cast<std::size_t>(regime)][static_cast<std::size_t>(i)];
  if (p > 1) F.block(N, 0, N * (p - 1), N * (p - 1)).setIdentity();
  return F;
}

std::vector<RegimeStability> spectral_check(const ModelParams& params) {
  std::vector<RegimeStability> out(static_cast<std::size_t>(params.n_regimes()));
  for (int m = 0; m < params.n_regimes(); ++m) {
    const Eigen::MatrixXd F = companion_matrix(params, m);
    Eigen::EigenSolver<Eigen::MatrixXd> es(F, false);
    double radius = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) radius = std::max(radius, std::abs(es.eigenvalues()(i)));
    out[static_cast<std::size_t>(m)] = {radius, radius < 1.0};
  }
  return out;
}

std::string states_to_csv(const std::vector<int>& states, const std::vector<double>& timestamps) {
  std::string out = "t,state\n";
  for (std::size_t t = 0; t < states.size(); ++t)
    out += format_exact(t < timestamps.size() ? timestamps[t] : static_cast<double>(t)) + "," +
           std::to_string(states[t] + 1) + "\n";
  return out;
}

}  // namespace msvar
