#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "msvar/error.hpp"
#include "msvar/inference.hpp"
#include "msvar/model.hpp"
#include "oracles.hpp"

using namespace msvar;

namespace {

ModelSpec spec_of(Eigen::Index n, int m, int p) {
  ModelSpec s;
  s.n_channels = n;
  s.n_regimes = m;
  s.lags = p;
  return s;
}

bool mentions(const std::vector<std::string>& issues, const std::string& text) {
  for (const auto& i : issues)
    if (i.find(text) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(ConditionalDensity, StandardNormalAtMode) {
  auto params = ModelParams::zeros(spec_of(1, 1, 0));
  const auto series = make_series(Eigen::MatrixXd::Zero(3, 1));
  EXPECT_NEAR(conditional_log_density(series, params, 1, 0), -0.5 * std::log(2.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(conditional_log_density(series, params, 1, 0), -0.9189, 1e-4);
}

TEST(ConditionalDensity, IdenticalRegimesGiveIdenticalDensities) {
  std::mt19937_64 rng(4);
  auto params = oracle::random_params(2, 2, 1, rng);
  params.intercepts.row(1) = params.intercepts.row(0);
  params.coeffs[1] = params.coeffs[0];
  params.covariances[1] = params.covariances[0];
  const auto series = make_series(oracle::random_data(12, 2, rng));
  for (Eigen::Index t = 1; t < 12; ++t)
    EXPECT_EQ(conditional_log_density(series, params, t, 0), conditional_log_density(series, params, t, 1));
}

TEST(ConditionalDensity, MatchesDenseGaussianFormula) {
  std::mt19937_64 rng(5);
  const auto params = oracle::random_params(2, 2, 1, rng);
  const auto series = make_series(oracle::random_data(10, 2, rng));
  for (Eigen::Index t = 1; t < 10; ++t)
    for (int m = 0; m < 2; ++m) {
      const double expected = oracle::gaussian_logpdf(series.data.row(t).transpose(),
                                                      oracle::conditional_mean(params, series.data, t, m),
                                                      params.covariances[static_cast<std::size_t>(m)]);
      EXPECT_NEAR(conditional_log_density(series, params, t, m), expected, 1e-10);
    }
}

TEST(ConditionalDensity, TimeWithinLagsIsAnIndexError) {
  const auto params = ModelParams::zeros(spec_of(1, 1, 2));
  const auto series = make_series(Eigen::MatrixXd::Zero(5, 1));
  EXPECT_THROW(conditional_log_density(series, params, 1, 0), IndexError);
  EXPECT_THROW(conditional_log_density(series, params, 5, 0), IndexError);
  EXPECT_THROW(conditional_log_density(series, params, 2, 1), IndexError);
  EXPECT_NO_THROW(conditional_log_density(series, params, 2, 0));
}

TEST(ConditionalDensity, IndefiniteCovarianceNamesRegime) {
  auto params = ModelParams::zeros(spec_of(2, 2, 0));
  params.covariances[1] << 1.0, 2.0, 2.0, 1.0;
  const auto series = make_series(Eigen::MatrixXd::Zero(3, 2));
  try {
    conditional_log_density(series, params, 1, 1);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("regime 2"), std::string::npos);
  }
}

TEST(ConditionalDensity, NeverNaNForExtremeButValidInputs) {
  auto params = ModelParams::zeros(spec_of(2, 1, 0));
  params.covariances[0] = 1e-6 * Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd d(2, 2);
  d << 0.0, 0.0, 1e3, -1e3;
  const auto series = make_series(d);
  const double v = conditional_log_density(series, params, 1, 0);
  EXPECT_FALSE(std::isnan(v));
  EXPECT_LT(v, -1e11);
}

TEST(LogLikelihood, SingleRegimeIsSumOfDensities) {
  std::mt19937_64 rng(6);
  const auto params = oracle::random_params(2, 1, 2, rng);
  const auto series = make_series(oracle::random_data(30, 2, rng));
  double sum = 0.0;
  for (Eigen::Index t = 2; t < 30; ++t)
    sum += oracle::gaussian_logpdf(series.data.row(t).transpose(), oracle::conditional_mean(params, series.data, t, 0),
                                   params.covariances[0]);
  EXPECT_NEAR(log_likelihood(series, params), sum, 1e-9);
}

TEST(LogLikelihood, InvariantUnderRegimePermutation) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    const auto params = oracle::random_params(2, 3, 1, rng);
    const auto series = make_series(oracle::random_data(40, 2, rng));
    const auto permuted = permute_regimes(params, {2, 0, 1});
    EXPECT_NEAR(log_likelihood(series, params), log_likelihood(series, permuted), 1e-9);
  }
}

TEST(LogLikelihood, MatchesPathEnumeration) {
  std::mt19937_64 rng(8);
  const auto params = oracle::random_params(2, 2, 1, rng);
  const auto series = make_series(oracle::random_data(8, 2, rng));
  const auto exact = oracle::enumerate_paths(params, series.data);
  EXPECT_NEAR(log_likelihood(series, params), exact.log_likelihood, 1e-9);
}

TEST(LogLikelihood, TooFewRowsIsAnInputError) {
  const auto params = ModelParams::zeros(spec_of(1, 1, 3));
  const auto series = make_series(Eigen::MatrixXd::Zero(3, 1));
  EXPECT_THROW(log_likelihood(series, params), InputError);
}

TEST(Validate, AcceptsDefaultParameters) {
  auto params = ModelParams::zeros(spec_of(2, 2, 1));
  params.transition = Eigen::MatrixXd::Identity(2, 2);
  EXPECT_TRUE(validate(params).empty());
}

TEST(Validate, ReportsEveryViolation) {
  auto params = ModelParams::zeros(spec_of(2, 2, 1));
  params.transition.row(0) << 0.5, 0.4;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(2, 2);
  Eigen::Vector2d eig(1.0, -0.5);
  v << std::sqrt(0.5), -std::sqrt(0.5), std::sqrt(0.5), std::sqrt(0.5);
  params.covariances[1] = v * eig.asDiagonal() * v.transpose();
  params.initial_dist << 0.7, 0.7;
  const auto issues = validate(params);
  EXPECT_TRUE(mentions(issues, "transition row 1"));
  EXPECT_TRUE(mentions(issues, "regime 2"));
  EXPECT_TRUE(mentions(issues, "initial_dist"));
  EXPECT_GE(issues.size(), 3u);
}

TEST(Validate, DiagonalRestrictionChecked) {
  auto spec = spec_of(2, 1, 1);
  spec.diagonal_var = true;
  auto params = ModelParams::zeros(spec);
  params.coeffs[0][0](0, 1) = 0.1;
  EXPECT_TRUE(mentions(validate(params), "restricted"));
}

TEST(Validate, SharedBlocksMustAgree) {
  auto spec = spec_of(1, 2, 1);
  spec.switch_coeffs = false;
  spec.switch_cov = false;
  auto params = ModelParams::zeros(spec);
  params.coeffs[1][0](0, 0) = 0.3;
  params.covariances[1](0, 0) = 2.0;
  const auto issues = validate(params);
  EXPECT_TRUE(mentions(issues, "lag coefficients"));
  EXPECT_TRUE(mentions(issues, "covariance is shared"));
}

TEST(Spec, ConsistencyChecks) {
  auto s = spec_of(3, 2, 1);
  s.switch_intercept = s.switch_coeffs = s.switch_cov = false;
  EXPECT_THROW(s.require_valid(), ConfigError);
  s = spec_of(3, 2, 1);
  s.regression = RegressionMode{0, {0, 1}, false};
  EXPECT_THROW(s.require_valid(), ConfigError);
  s.regression = RegressionMode{0, {1, 2}, false};
  EXPECT_NO_THROW(s.require_valid());
}

TEST(Spec, ParameterCount) {
  EXPECT_EQ(spec_of(2, 2, 1).parameter_count(), 2 * 2 + 4 * 2 + 3 * 2 + 2);
  EXPECT_EQ(spec_of(2, 1, 1).parameter_count(), 2 + 4 + 3);
  auto s = spec_of(4, 3, 2);
  s.switch_cov = false;
  EXPECT_EQ(s.parameter_count(), 4 * 3 + 32 * 3 + 10 + 6);
  s.diagonal_var = true;
  EXPECT_EQ(s.parameter_count(), 4 * 3 + 8 * 3 + 10 + 6);
  auto r = spec_of(4, 4, 1);
  r.regression = RegressionMode{0, {1, 2, 3}, false};
  // three slopes and one variance per regime, plus transitions
  EXPECT_EQ(r.parameter_count(), 3 * 4 + 1 * 4 + 12);
}

TEST(Spec, RegressionMaskHasOnlyTargetRow) {
  auto s = spec_of(4, 2, 1);
  s.regression = RegressionMode{0, {1, 2, 3}, false};
  const auto mask = s.coefficient_mask();
  EXPECT_EQ(mask.count(), 3);
  EXPECT_FALSE(mask(0, 0));
  EXPECT_TRUE(mask(0, s.lag_column(1, 1)));
  EXPECT_FALSE(mask(0, s.lag_column(1, 0)));
  s.regression->intercept = true;
  EXPECT_TRUE(s.coefficient_mask()(0, 0));
}

TEST(Transition, ColumnConventionIsTransposed) {
  Eigen::MatrixXd column_form(2, 2);
  column_form << 0.94, 0.3, 0.06, 0.7;
  const auto rows = from_column_stochastic(column_form);
  EXPECT_DOUBLE_EQ(rows(0, 1), 0.06);
  EXPECT_DOUBLE_EQ(rows(1, 0), 0.3);
  EXPECT_NEAR(rows.row(0).sum(), 1.0, 1e-15);
  EXPECT_TRUE(to_column_stochastic(rows).isApprox(column_form));
}

TEST(Transition, StationaryDistribution) {
  Eigen::MatrixXd P(2, 2);
  P << 0.9, 0.1, 0.2, 0.8;
  const auto pi = stationary_distribution(P);
  EXPECT_NEAR(pi(0), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(pi(1), 1.0 / 3.0, 1e-12);
  EXPECT_TRUE((pi.transpose() * P).isApprox(pi.transpose(), 1e-12));
  const auto uniform = stationary_distribution(Eigen::MatrixXd::Identity(3, 3));
  EXPECT_NEAR(uniform(2), 1.0 / 3.0, 1e-15);
}

TEST(Lagged, LayoutMatchesLagColumns) {
  Eigen::MatrixXd d(4, 2);
  d << 1, 2, 3, 4, 5, 6, 7, 8;
  const auto lagged = make_lagged(d, 2);
  ModelSpec s = spec_of(2, 1, 2);
  ASSERT_EQ(lagged.rows(), 2);
  EXPECT_EQ(lagged.z(0, 0), 1.0);
  EXPECT_EQ(lagged.z(0, s.lag_column(1, 0)), 3.0);
  EXPECT_EQ(lagged.z(0, s.lag_column(2, 1)), 2.0);
  EXPECT_EQ(lagged.y(1, 1), 8.0);
}
