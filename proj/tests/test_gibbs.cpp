#include <gtest/gtest.h>

#include <map>
#include <random>

#include "msvar/error.hpp"
#include "msvar/gibbs.hpp"
#include "msvar/simulate.hpp"
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

// Mean and batch-means standard error of a possibly autocorrelated sequence.
std::pair<double, double> mean_and_se(const std::vector<double>& x, int batches = 50) {
  const std::size_t len = x.size() / static_cast<std::size_t>(batches);
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) s += x[static_cast<std::size_t>(b) * len + i];
    means.push_back(s / static_cast<double>(len));
  }
  double m = 0.0;
  for (double v : means) m += v;
  m /= batches;
  double var = 0.0;
  for (double v : means) var += (v - m) * (v - m);
  var /= batches - 1;
  return {m, std::sqrt(var / batches)};
}

}  // namespace

TEST(Dirichlet, MeanMatchesConcentration) {
  std::mt19937_64 rng(31);
  Eigen::VectorXd alpha(3);
  alpha << 1.0, 2.0, 3.0;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(3);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto d = sample_dirichlet(alpha, rng);
    EXPECT_NEAR(d.sum(), 1.0, 1e-12);
    sum += d;
  }
  sum /= n;
  EXPECT_NEAR(sum(0), 1.0 / 6.0, 0.01);
  EXPECT_NEAR(sum(1), 2.0 / 6.0, 0.01);
  EXPECT_NEAR(sum(2), 3.0 / 6.0, 0.01);
}

TEST(InverseWishart, MeanMatchesScaleOverDof) {
  std::mt19937_64 rng(32);
  Eigen::MatrixXd scale(2, 2);
  scale << 2.0, 0.5, 0.5, 1.0;
  const double dof = 10.0;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, 2);
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += sample_inverse_wishart(dof, scale, rng);
  const Eigen::MatrixXd expected = scale / (dof - 2.0 - 1.0);
  EXPECT_LT(((sum / n) - expected).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_THROW(sample_inverse_wishart(0.5, scale, rng), ConfigError);
}

TEST(Transitions, CountsAlongPath) {
  const auto n = count_transitions({0, 0, 1, 1, 1, 0, 2}, 3);
  EXPECT_EQ(n(0, 0), 1.0);
  EXPECT_EQ(n(0, 1), 1.0);
  EXPECT_EQ(n(1, 1), 2.0);
  EXPECT_EQ(n(1, 0), 1.0);
  EXPECT_EQ(n(0, 2), 1.0);
  EXPECT_EQ(n.sum(), 6.0);
}

TEST(Ffbs, PathFrequenciesMatchEnumeration) {
  std::mt19937_64 rng(33);
  const auto params = oracle::random_params(1, 2, 0, rng);
  const auto series = make_series(oracle::random_data(6, 1, rng) * 0.7);
  const auto exact = oracle::enumerate_paths(params, series.data);
  std::map<std::vector<int>, int> counts;
  const int n = 40000;
  double ll = 0.0;
  for (int i = 0; i < n; ++i) ++counts[sample_states(series, params, rng, &ll)];
  EXPECT_NEAR(ll, exact.log_likelihood, 1e-10);
  double worst = 0.0;
  for (std::size_t k = 0; k < exact.paths.size(); ++k) {
    const double freq = counts[exact.paths[k]] / static_cast<double>(n);
    const double p = exact.path_probability[k];
    // Allow five binomial standard errors per path.
    EXPECT_NEAR(freq, p, 5.0 * std::sqrt(p * (1.0 - p) / n) + 1e-4) << "path " << k;
    worst = std::max(worst, std::abs(freq - p));
  }
  EXPECT_LT(worst, 0.015);
}

// Successive-conditional check: alternating a full sweep with a fresh draw
// of the data must leave the prior invariant.
TEST(Gibbs, JointDistributionTest) {
  const auto spec = spec_of(1, 2, 0);
  GibbsPrior prior;
  prior.coeff_sd = 1.0;
  const Eigen::Index T = 20;
  std::mt19937_64 rng(34);

  auto stats = [](const ModelParams& p) {
    return std::vector<double>{p.intercepts(0, 0),
                               p.intercepts(0, 0) * p.intercepts(0, 0),
                               std::log(p.covariances[0](0, 0)),
                               p.transition(0, 0),
                               p.initial_dist(0)};
  };
  const int n = 20000;
  std::vector<std::vector<double>> marginal(5), successive(5);
  for (int i = 0; i < n; ++i) {
    const auto s = stats(sample_prior(spec, prior, T, rng).params);
    for (std::size_t k = 0; k < 5; ++k) marginal[k].push_back(s[k]);
  }

  auto start = sample_prior(spec, prior, T, rng);
  Eigen::MatrixXd data = Eigen::MatrixXd::Zero(T, 1);
  regenerate_data(data, start.params, start.states, rng);
  GibbsSampler sampler(make_series(data), start.params, prior, 35);
  sampler.set_state(start.params, start.states);
  for (int i = 0; i < n; ++i) {
    sampler.sweep();
    Eigen::MatrixXd fresh = sampler.data();
    regenerate_data(fresh, sampler.params(), sampler.states(), sampler.rng());
    sampler.set_data(fresh);
    const auto s = stats(sampler.params());
    for (std::size_t k = 0; k < 5; ++k) successive[k].push_back(s[k]);
  }
  for (std::size_t k = 0; k < 5; ++k) {
    const auto [m1, se1] = mean_and_se(marginal[k]);
    const auto [m2, se2] = mean_and_se(successive[k]);
    const double z = (m1 - m2) / std::sqrt(se1 * se1 + se2 * se2);
    EXPECT_LT(std::abs(z), 4.0) << "statistic " << k << ": prior " << m1 << " vs chain " << m2;
  }
}

TEST(Gibbs, KeepsExpectedNumberOfDraws) {
  std::mt19937_64 rng(36);
  const auto truth = oracle::random_params(1, 2, 1, rng);
  const auto sim = simulate(truth, 150, 1);
  GibbsConfig cfg;
  cfg.n_samples = 230;
  cfg.burn_in = 30;
  cfg.thin = 3;
  cfg.n_chains = 2;
  const auto res = fit_gibbs(sim.series, truth.spec, cfg);
  EXPECT_EQ(cfg.kept_per_chain(), 66);
  EXPECT_EQ(res.samples.values.rows(), 132);
  EXPECT_EQ(res.samples.draws.size(), 132u);
  EXPECT_EQ(res.samples.log_likelihood.size(), 132u);
  EXPECT_EQ(std::count(res.samples.chain.begin(), res.samples.chain.end(), 1), 66);
  EXPECT_LT((res.samples.state_frequency.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_EQ(res.samples.acceptance_rate, 1.0);
  EXPECT_EQ(res.fit.method, "gibbs");
  EXPECT_EQ(res.samples.summary.size(), res.samples.names.size());
}

TEST(Gibbs, DeterministicForSeed) {
  std::mt19937_64 rng(37);
  const auto truth = oracle::random_params(2, 2, 1, rng);
  const auto sim = simulate(truth, 120, 2);
  GibbsConfig cfg;
  cfg.n_samples = 150;
  cfg.burn_in = 50;
  cfg.thin = 1;
  cfg.n_chains = 2;
  cfg.seed = 99;
  const auto a = fit_gibbs(sim.series, truth.spec, cfg);
  const auto b = fit_gibbs(sim.series, truth.spec, cfg);
  EXPECT_EQ(a.samples.values, b.samples.values);
  cfg.seed = 100;
  const auto c = fit_gibbs(sim.series, truth.spec, cfg);
  EXPECT_NE(a.samples.values, c.samples.values);
}

TEST(Gibbs, PosteriorConcentratesNearTruth) {
  auto truth = ModelParams::zeros(spec_of(1, 2, 1));
  truth.intercepts << 1.0, -2.0;
  truth.coeffs[0][0](0, 0) = 0.5;
  truth.coeffs[1][0](0, 0) = -0.2;
  truth.covariances[0](0, 0) = 0.25;
  truth.covariances[1](0, 0) = 1.5;
  truth.transition << 0.95, 0.05, 0.08, 0.92;
  truth.initial_dist << 0.5, 0.5;
  const auto sim = simulate(truth, 800, 5);
  GibbsConfig cfg;
  cfg.n_samples = 1500;
  cfg.burn_in = 500;
  cfg.n_chains = 2;
  const auto res = fit_gibbs(sim.series, truth.spec, cfg);
  const auto& post = res.fit.params;
  EXPECT_NEAR(post.intercepts(0, 0), 1.0, 0.2);
  EXPECT_NEAR(post.intercepts(1, 0), -2.0, 0.4);
  EXPECT_NEAR(post.covariances[0](0, 0), 0.25, 0.07);
  EXPECT_NEAR(post.transition(0, 0), 0.95, 0.04);
  for (const auto& s : res.samples.summary)
    if (s.name.rfind("pi.", 0) != 0) EXPECT_LT(s.rhat, 1.1) << s.name;
  std::vector<int> states(sim.true_states.begin() + 1, sim.true_states.end());
  EXPECT_GE(oracle::best_permutation_accuracy(states, res.fit.classification, 2), 0.9);
}

TEST(Gibbs, RejectsBadConfig) {
  GibbsConfig cfg;
  cfg.burn_in = cfg.n_samples;
  EXPECT_THROW(cfg.require_valid(), ConfigError);
  cfg = GibbsConfig{};
  cfg.thin = 0;
  EXPECT_THROW(cfg.require_valid(), ConfigError);
  GibbsPrior prior;
  prior.gamma_rate = 0.0;
  EXPECT_THROW(prior.require_valid(), ConfigError);
}

TEST(Diagnostics, EssOfIndependentAndCorrelatedDraws) {
  std::mt19937_64 rng(38);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 20000;
  Eigen::VectorXd iid(n), ar(n);
  double x = 0.0;
  for (int i = 0; i < n; ++i) {
    iid(i) = z(rng);
    x = 0.9 * x + std::sqrt(1.0 - 0.81) * z(rng);
    ar(i) = x;
  }
  const std::vector<int> one(static_cast<std::size_t>(n), 0);
  EXPECT_NEAR(effective_sample_size(iid, one) / n, 1.0, 0.15);
  EXPECT_NEAR(effective_sample_size(ar, one) / n, 0.1 / 1.9, 0.02);
  std::vector<int> two(static_cast<std::size_t>(n), 0);
  std::fill(two.begin() + n / 2, two.end(), 1);
  EXPECT_NEAR(effective_sample_size(iid, two) / n, 1.0, 0.15);
}

TEST(Diagnostics, SplitRhat) {
  std::mt19937_64 rng(39);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 4000;
  Eigen::VectorXd same(n), apart(n);
  std::vector<int> chain(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    chain[static_cast<std::size_t>(i)] = i < n / 2 ? 0 : 1;
    same(i) = z(rng);
    apart(i) = z(rng) + (i < n / 2 ? 0.0 : 3.0);
  }
  EXPECT_LT(split_rhat(same, chain), 1.01);
  EXPECT_GT(split_rhat(apart, chain), 1.5);
  // A trend inside one chain is caught by the split.
  Eigen::VectorXd trend(n);
  for (int i = 0; i < n; ++i) trend(i) = z(rng) + 4.0 * i / n;
  EXPECT_GT(split_rhat(trend, std::vector<int>(static_cast<std::size_t>(n), 0)), 1.1);
}

TEST(Output, NamesAndCsv) {
  const auto params = ModelParams::zeros(spec_of(2, 2, 1));
  const auto names = parameter_names(params, {"a", "dv"});
  EXPECT_EQ(static_cast<Eigen::Index>(names.size()), flatten_parameters(params).size());
  EXPECT_EQ(names.front(), "r1.c.a");
  EXPECT_NE(std::find(names.begin(), names.end(), "r2.A1.dv.a"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "r1.S.a.dv"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "P.2.1"), names.end());
  EXPECT_EQ(names.back(), "pi.2");

  PosteriorSamples s;
  s.names = {"x", "y"};
  s.values.resize(2, 2);
  s.values << 1, 2, 3, 4;
  s.chain = {0, 0};
  s.log_likelihood = {-1.5, -1.25};
  const auto csv = chain_to_csv(s);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "chain,draw,loglik,x,y");
  EXPECT_NE(csv.find("\n1,2,-1.25,3,4"), std::string::npos);

  ParameterSummary p;
  p.name = "x";
  p.ess = std::numeric_limits<double>::quiet_NaN();
  const auto j = summary_to_json({p});
  EXPECT_TRUE(j["x"]["ess"].is_null());
  EXPECT_TRUE(j["x"].contains("q95"));
}
