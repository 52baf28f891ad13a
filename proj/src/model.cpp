#include "msvar/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "msvar/csv.hpp"
#include "msvar/diagnostics.hpp"
#include "msvar/error.hpp"
#include "msvar/inference.hpp"
#include "msvar/kernels.hpp"

namespace msvar {

std::vector<Eigen::Index> ModelSpec::equations() const {
  if (regression) return {regression->target};
  std::vector<Eigen::Index> eq(static_cast<std::size_t>(n_channels));
  for (Eigen::Index n = 0; n < n_channels; ++n) eq[static_cast<std::size_t>(n)] = n;
  return eq;
}

Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> ModelSpec::coefficient_mask() const {
  const Eigen::Index K = regressor_count();
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask =
      Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n_channels, K, false);
  if (regression) {
    const Eigen::Index row = regression->target;
    mask(row, 0) = regression->intercept;
    for (int i = 1; i <= lags; ++i)
      for (Eigen::Index c : regression->regressors) mask(row, lag_column(i, c)) = true;
  } else if (diagonal_var) {
    for (Eigen::Index n = 0; n < n_channels; ++n) {
      mask(n, 0) = true;
      for (int i = 1; i <= lags; ++i) mask(n, lag_column(i, n)) = true;
    }
  } else {
    mask.setConstant(true);
  }
  return mask;
}

Eigen::Index ModelSpec::parameter_count() const {
  const auto mask = coefficient_mask();
  const Eigen::Index M = n_regimes;
  const Eigen::Index intercept_free = mask.col(0).count();
  const Eigen::Index lag_free = mask.count() - intercept_free;
  const auto Ne = static_cast<Eigen::Index>(equations().size());
  const Eigen::Index cov_free = Ne * (Ne + 1) / 2;
  return intercept_free * (switch_intercept ? M : 1) + lag_free * (switch_coeffs ? M : 1) +
         cov_free * (switch_cov ? M : 1) + M * (M - 1);
}

std::vector<std::string> ModelSpec::check() const {
  std::vector<std::string> issues;
  if (n_channels < 1) issues.emplace_back("n_channels must be >= 1");
  if (n_regimes < 1) issues.emplace_back("n_regimes must be >= 1");
  if (lags < 0) issues.emplace_back("lags must be >= 0");
  if (n_regimes > 1 && !switch_intercept && !switch_coeffs && !switch_cov)
    issues.emplace_back("at least one of intercept/coefficients/covariance must switch when M > 1");
  if (regression) {
    const auto& r = *regression;
    if (r.target < 0 || r.target >= n_channels) issues.emplace_back("regression target out of range");
    if (r.regressors.empty()) issues.emplace_back("regression needs at least one regressor");
    for (auto c : r.regressors) {
      if (c < 0 || c >= n_channels) issues.emplace_back("regression regressor out of range");
      if (c == r.target) issues.emplace_back("regression target is also listed as a regressor");
    }
    if (lags < 1) issues.emplace_back("regression mode needs lags >= 1");
    if (diagonal_var) issues.emplace_back("regression mode and diagonal_var are exclusive");
  }
  return issues;
}

void ModelSpec::require_valid() const {
  auto issues = check();
  if (issues.empty()) return;
  std::string msg = "invalid model spec:";
  for (const auto& i : issues) msg += " " + i + ";";
  throw ConfigError(msg);
}

Eigen::MatrixXd ModelParams::design(int m) const {
  const Eigen::Index N = n_channels();
  Eigen::MatrixXd b(N, spec.regressor_count());
  b.col(0) = intercepts.row(m).transpose();
  for (int i = 0; i < lags(); ++i)
    b.block(0, 1 + static_cast<Eigen::Index>(i) * N, N, N) = coeffs[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
  return b;
}

void ModelParams::set_design(int m, const Eigen::MatrixXd& b) {
  const Eigen::Index N = n_channels();
  intercepts.row(m) = b.col(0).transpose();
  for (int i = 0; i < lags(); ++i)
    coeffs[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)] = b.block(0, 1 + static_cast<Eigen::Index>(i) * N, N, N);
}

ModelParams ModelParams::zeros(const ModelSpec& spec) {
  spec.require_valid();
  const Eigen::Index N = spec.n_channels;
  const int M = spec.n_regimes;
  ModelParams p;
  p.spec = spec;
  p.intercepts = Eigen::MatrixXd::Zero(M, N);
  p.coeffs.assign(static_cast<std::size_t>(M),
                  std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(spec.lags), Eigen::MatrixXd::Zero(N, N)));
  p.covariances.assign(static_cast<std::size_t>(M), Eigen::MatrixXd::Identity(N, N));
  p.transition = Eigen::MatrixXd::Constant(M, M, 1.0 / M);
  p.initial_dist = Eigen::VectorXd::Constant(M, 1.0 / M);
  return p;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& P) {
  const Eigen::Index M = P.rows();
  // Boolean reachability closure.
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> reach = (P.array() > 0.0);
  for (Eigen::Index i = 0; i < M; ++i) reach(i, i) = true;
  for (Eigen::Index k = 0; k < M; ++k)
    for (Eigen::Index i = 0; i < M; ++i)
      if (reach(i, k))
        for (Eigen::Index j = 0; j < M; ++j) reach(i, j) = reach(i, j) || reach(k, j);
  // A state is recurrent when everything it reaches reaches it back; count
  // the closed classes by their smallest member.
  int closed_classes = 0;
  for (Eigen::Index i = 0; i < M; ++i) {
    bool recurrent = true;
    Eigen::Index smallest = i;
    for (Eigen::Index j = 0; j < M; ++j) {
      if (reach(i, j) && !reach(j, i)) recurrent = false;
      if (reach(i, j) && reach(j, i)) smallest = std::min(smallest, j);
    }
    if (recurrent && smallest == i) ++closed_classes;
  }
  if (closed_classes != 1) return Eigen::VectorXd::Constant(M, 1.0 / static_cast<double>(M));
  Eigen::MatrixXd A = P.transpose() - Eigen::MatrixXd::Identity(M, M);
  A.row(M - 1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(M);
  b(M - 1) = 1.0;
  Eigen::VectorXd pi = A.fullPivLu().solve(b);
  pi = pi.cwiseMax(0.0);
  return pi / pi.sum();
}

Eigen::MatrixXd from_column_stochastic(const Eigen::MatrixXd& column_form) {
  return column_form.transpose();
}

Eigen::MatrixXd to_column_stochastic(const Eigen::MatrixXd& row_form) { return row_form.transpose(); }

ModelParams permute_regimes(const ModelParams& params, const std::vector<int>& perm) {
  const int M = params.n_regimes();
  if (static_cast<int>(perm.size()) != M) throw ConfigError("permutation size mismatch");
  ModelParams out = params;
  for (int k = 0; k < M; ++k) {
    const int src = perm[static_cast<std::size_t>(k)];
    out.intercepts.row(k) = params.intercepts.row(src);
    out.coeffs[static_cast<std::size_t>(k)] = params.coeffs[static_cast<std::size_t>(src)];
    out.covariances[static_cast<std::size_t>(k)] = params.covariances[static_cast<std::size_t>(src)];
    out.initial_dist(k) = params.initial_dist(src);
    for (int l = 0; l < M; ++l) out.transition(k, l) = params.transition(src, perm[static_cast<std::size_t>(l)]);
  }
  return out;
}

std::vector<std::string> validate(const ModelParams& params) {
  std::vector<std::string> issues = params.spec.check();
  if (!issues.empty()) return issues;
  const auto& spec = params.spec;
  const int M = spec.n_regimes;
  const Eigen::Index N = spec.n_channels;
  auto shape = [&](bool ok, const std::string& what) {
    if (!ok) issues.push_back(what + " has the wrong shape");
    return ok;
  };
  bool shapes_ok = shape(params.intercepts.rows() == M && params.intercepts.cols() == N, "intercepts");
  shapes_ok &= shape(static_cast<int>(params.coeffs.size()) == M, "coeffs");
  if (shapes_ok)
    for (const auto& reg : params.coeffs) {
      shapes_ok &= shape(static_cast<int>(reg.size()) == spec.lags, "coeffs lag list");
      for (const auto& a : reg) shapes_ok &= shape(a.rows() == N && a.cols() == N, "coefficient matrix");
    }
  shapes_ok &= shape(static_cast<int>(params.covariances.size()) == M, "covariances");
  if (shapes_ok)
    for (const auto& s : params.covariances) shapes_ok &= shape(s.rows() == N && s.cols() == N, "covariance");
  shapes_ok &= shape(params.transition.rows() == M && params.transition.cols() == M, "transition");
  shapes_ok &= shape(params.initial_dist.size() == M, "initial_dist");
  if (!shapes_ok) return issues;

  for (int i = 0; i < M; ++i) {
    const auto row = params.transition.row(i);
    if (!row.allFinite() || (row.array() < 0.0).any() || (row.array() > 1.0).any())
      issues.push_back("transition row " + std::to_string(i + 1) + " has entries outside [0, 1]");
    const double s = row.sum();
    if (!(std::abs(s - 1.0) <= 1e-12))
      issues.push_back("transition row " + std::to_string(i + 1) + " sums to " + format_exact(s));
  }
  if (!params.initial_dist.allFinite() || (params.initial_dist.array() < 0.0).any() ||
      !(std::abs(params.initial_dist.sum() - 1.0) <= 1e-12))
    issues.push_back("initial_dist is not on the probability simplex (sum " +
                     format_exact(params.initial_dist.sum()) + ")");

  for (int m = 0; m < M; ++m) {
    const auto& S = params.covariances[static_cast<std::size_t>(m)];
    const std::string tag = "covariance of regime " + std::to_string(m + 1);
    if (!S.allFinite()) {
      issues.push_back(tag + " has non-finite entries");
      continue;
    }
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      issues.push_back(tag + " is not symmetric");
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
    if (!(es.eigenvalues().minCoeff() > 0.0))
      issues.push_back(tag + " is not positive definite (smallest eigenvalue " +
                       format_exact(es.eigenvalues().minCoeff()) + ")");
  }

  const auto mask = spec.coefficient_mask();
  const Eigen::Index K = spec.regressor_count();
  for (int m = 0; m < M; ++m) {
    const Eigen::MatrixXd b = params.design(m);
    if (!b.allFinite()) issues.push_back("coefficients of regime " + std::to_string(m + 1) + " are not finite");
    for (Eigen::Index n = 0; n < N; ++n)
      for (Eigen::Index a = 0; a < K; ++a)
        if (!mask(n, a) && b(n, a) != 0.0) {
          issues.push_back("restricted coefficient (row " + std::to_string(n + 1) + ", column " +
                           std::to_string(a) + ") of regime " + std::to_string(m + 1) + " is not zero");
          a = K;
          n = N;
        }
  }
  if (M > 1) {
    const Eigen::MatrixXd b0 = params.design(0);
    for (int m = 1; m < M; ++m) {
      const Eigen::MatrixXd b = params.design(m);
      for (Eigen::Index a = 0; a < K; ++a)
        if (!spec.column_switches(a) && b.col(a) != b0.col(a)) {
          issues.push_back(std::string(a == 0 ? "intercept" : "lag coefficients") +
                           " are shared but differ in regime " + std::to_string(m + 1));
          break;
        }
      if (!spec.switch_cov && params.covariances[static_cast<std::size_t>(m)] != params.covariances[0])
        issues.push_back("covariance is shared but differs in regime " + std::to_string(m + 1));
    }
  }
  return issues;
}

LaggedData make_lagged(const Eigen::MatrixXd& data, int lags) {
  const Eigen::Index T = data.rows();
  const Eigen::Index N = data.cols();
  if (lags < 0) throw ConfigError("lags must be >= 0");
  if (T <= lags)
    throw InputError("insufficient data: " + std::to_string(T) + " rows for lag order " +
                     std::to_string(lags));
  LaggedData d;
  d.first = lags;
  d.lags = lags;
  const Eigen::Index rows = T - lags;
  d.y = data.bottomRows(rows);
  d.z.resize(rows, 1 + N * lags);
  d.z.col(0).setOnes();
  for (int i = 1; i <= lags; ++i)
    d.z.block(0, 1 + static_cast<Eigen::Index>(i - 1) * N, rows, N) = data.middleRows(lags - i, rows);
  return d;
}

std::vector<RegimeGaussian> factor_regimes(const ModelParams& params) {
  const auto eqs = params.spec.equations();
  const auto Ne = static_cast<Eigen::Index>(eqs.size());
  std::vector<RegimeGaussian> out(static_cast<std::size_t>(params.n_regimes()));
  for (int m = 0; m < params.n_regimes(); ++m) {
    auto& g = out[static_cast<std::size_t>(m)];
    const Eigen::MatrixXd b = params.design(m);
    g.coef.resize(Ne, b.cols());
    Eigen::MatrixXd S(Ne, Ne);
    for (Eigen::Index e = 0; e < Ne; ++e) {
      g.coef.row(e) = b.row(eqs[static_cast<std::size_t>(e)]);
      for (Eigen::Index f = 0; f < Ne; ++f)
        S(e, f) = params.covariances[static_cast<std::size_t>(m)](eqs[static_cast<std::size_t>(e)], eqs[static_cast<std::size_t>(f)]);
    }
    if (!S.allFinite())
      throw NumericalError("covariance of regime " + std::to_string(m + 1) + " is not finite");
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
      const double lo = es.eigenvalues().minCoeff();
      const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
      if (lo < -1e-10 * std::max(1.0, hi))
        throw NumericalError("covariance of regime " + std::to_string(m + 1) +
                             " is not positive definite (smallest eigenvalue " + format_exact(lo) + ")");
      const double ridge = 1e-8 * std::max(S.trace(), 1e-300) / static_cast<double>(Ne);
      warn("covariance of regime " + std::to_string(m + 1) + " is singular; added ridge " +
           format_short(ridge));
      S.diagonal().array() += ridge;
      llt.compute(S);
      if (llt.info() != Eigen::Success)
        throw NumericalError("covariance of regime " + std::to_string(m + 1) +
                             " cannot be factorized");
    }
    g.chol_lower = llt.matrixL();
    g.log_norm = -0.5 * static_cast<double>(Ne) * std::log(2.0 * std::numbers::pi) -
                 g.chol_lower.diagonal().array().log().sum();
  }
  return out;
}

double conditional_log_density(const ObservationSeries& series, const ModelParams& params,
                               Eigen::Index t, int regime) {
  const int p = params.lags();
  if (t < p || t >= series.length())
    throw IndexError("time index " + std::to_string(t) + " outside [" + std::to_string(p) + ", " +
                     std::to_string(series.length()) + ")");
  if (regime < 0 || regime >= params.n_regimes())
    throw IndexError("regime index " + std::to_string(regime) + " out of range");
  if (series.n_channels() != params.n_channels())
    throw InputError("series has " + std::to_string(series.n_channels()) + " channels, model has " +
                     std::to_string(params.n_channels()));
  const auto eqs = params.spec.equations();
  const auto g = factor_regimes(params)[static_cast<std::size_t>(regime)];
  const Eigen::Index N = params.n_channels();
  Eigen::VectorXd z(params.spec.regressor_count());
  z(0) = 1.0;
  for (int i = 1; i <= p; ++i) z.segment(1 + static_cast<Eigen::Index>(i - 1) * N, N) = series.data.row(t - i).transpose();
  Eigen::VectorXd r(static_cast<Eigen::Index>(eqs.size()));
  for (std::size_t e = 0; e < eqs.size(); ++e)
    r(static_cast<Eigen::Index>(e)) = series.data(t, eqs[e]) - g.coef.row(static_cast<Eigen::Index>(e)).dot(z);
  g.chol_lower.triangularView<Eigen::Lower>().solveInPlace(r);
  return g.log_norm - 0.5 * r.squaredNorm();
}

Eigen::MatrixXd log_density_table(const LaggedData& data, const ModelParams& params) {
  if (data.y.cols() != params.n_channels())
    throw InputError("series has " + std::to_string(data.y.cols()) + " channels, model has " +
                     std::to_string(params.n_channels()));
  if (data.lags != params.lags()) throw InputError("lagged data built for a different lag order");
  return kernels::parallel::log_density_table(data, factor_regimes(params), params.spec.equations());
}

Eigen::MatrixXd log_density_table(const ObservationSeries& series, const ModelParams& params) {
  return log_density_table(make_lagged(series.data, params.lags()), params);
}

double log_likelihood(const ObservationSeries& series, const ModelParams& params) {
  return hamilton_filter(series, params).log_likelihood;
}

}  // namespace msvar
