#include <gtest/gtest.h>

#include "msvar/error.hpp"
#include "msvar/simulate.hpp"

using namespace msvar;

namespace {

ModelSpec spec_of(Eigen::Index n, int m, int p) {
  ModelSpec s;
  s.n_channels = n;
  s.n_regimes = m;
  s.lags = p;
  return s;
}

}  // namespace

TEST(Simulate, SameSeedSameOutput) {
  auto params = ModelParams::zeros(spec_of(2, 2, 1));
  params.coeffs[1][0] = 0.5 * Eigen::MatrixXd::Identity(2, 2);
  const auto a = simulate(params, 100, 17);
  const auto b = simulate(params, 100, 17);
  const auto c = simulate(params, 100, 18);
  EXPECT_EQ(a.series.data, b.series.data);
  EXPECT_EQ(a.true_states, b.true_states);
  EXPECT_NE(a.series.data, c.series.data);
  EXPECT_EQ(a.series.length(), 100);
  EXPECT_EQ(a.true_states.size(), 100u);
}

TEST(Simulate, TransitionFrequencies) {
  auto params = ModelParams::zeros(spec_of(1, 3, 0));
  params.transition << 0.8, 0.15, 0.05, 0.1, 0.7, 0.2, 0.3, 0.3, 0.4;
  const auto sim = simulate(params, 60000, 3, 0);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(3, 3);
  for (std::size_t t = 1; t < sim.true_states.size(); ++t) counts(sim.true_states[t - 1], sim.true_states[t]) += 1.0;
  for (int i = 0; i < 3; ++i) {
    const Eigen::RowVectorXd freq = counts.row(i) / counts.row(i).sum();
    EXPECT_LT((freq - params.transition.row(i)).cwiseAbs().maxCoeff(), 0.015) << "row " << i;
  }
}

TEST(Simulate, StationaryMomentsOfSingleRegimeVar) {
  auto params = ModelParams::zeros(spec_of(2, 1, 1));
  params.intercepts << 1.0, -0.5;
  params.coeffs[0][0] << 0.5, 0.2, -0.1, 0.3;
  params.covariances[0] << 1.0, 0.3, 0.3, 0.5;
  const auto sim = simulate(params, 200000, 4);
  const Eigen::MatrixXd& A = params.coeffs[0][0];
  const Eigen::VectorXd mu = (Eigen::MatrixXd::Identity(2, 2) - A).inverse() * params.intercepts.row(0).transpose();
  // vec(Gamma) = (I - A kron A)^-1 vec(Sigma)
  Eigen::MatrixXd kron(4, 4);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) kron.block(2 * i, 2 * j, 2, 2) = A(i, j) * A;
  Eigen::VectorXd vs(4);
  vs << 1.0, 0.3, 0.3, 0.5;
  const Eigen::VectorXd vg = (Eigen::MatrixXd::Identity(4, 4) - kron).inverse() * vs;
  const Eigen::VectorXd mean = sim.series.data.colwise().mean().transpose();
  const Eigen::MatrixXd centered = sim.series.data.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(centered.rows());
  EXPECT_LT((mean - mu).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_NEAR(cov(0, 0), vg(0), 0.03);
  EXPECT_NEAR(cov(0, 1), vg(2), 0.03);
  EXPECT_NEAR(cov(1, 1), vg(3), 0.03);
}

TEST(Simulate, ChannelsAndInterval) {
  const auto params = ModelParams::zeros(spec_of(2, 1, 0));
  const auto sim = simulate(params, 5, 0, 10, 0.1, {"a", "dv"});
  EXPECT_EQ(sim.series.channels, (std::vector<std::string>{"a", "dv"}));
  EXPECT_DOUBLE_EQ(sim.series.sample_interval, 0.1);
  EXPECT_NEAR(sim.series.timestamps[3], 0.3, 1e-12);
  const auto csv = states_to_csv(sim.true_states, sim.series.timestamps);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "t,state");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST(Simulate, RejectsInvalidOrExplosive) {
  auto params = ModelParams::zeros(spec_of(1, 2, 1));
  params.transition(0, 0) = 0.9;
  EXPECT_THROW(simulate(params, 10, 0), InputError);
  params = ModelParams::zeros(spec_of(1, 1, 1));
  EXPECT_THROW(simulate(params, 0, 0), ConfigError);
  params.coeffs[0][0](0, 0) = 3.0;
  EXPECT_THROW(simulate(params, 100, 0), NumericalError);
}

TEST(Stability, SpectralRadius) {
  auto params = ModelParams::zeros(spec_of(1, 2, 2));
  params.coeffs[0][0](0, 0) = 0.5;
  params.coeffs[1][0](0, 0) = 1.5;
  params.coeffs[1][1](0, 0) = -0.56;
  const auto st = spectral_check(params);
  EXPECT_NEAR(st[0].spectral_radius, 0.5, 1e-12);
  EXPECT_TRUE(st[0].stable);
  // roots of z^2 - 1.5 z + 0.56 are 0.8 and 0.7
  EXPECT_NEAR(st[1].spectral_radius, 0.8, 1e-12);
  EXPECT_EQ(companion_matrix(params, 1)(1, 0), 1.0);
}
