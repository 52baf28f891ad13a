#include <benchmark/benchmark.h>

#include <random>

#include "msvar/inference.hpp"
#include "msvar/kernels.hpp"

using namespace msvar;

namespace {

struct Problem {
  LaggedData data;
  ModelParams params;
  std::vector<RegimeGaussian> regimes;
  std::vector<Eigen::Index> equations;
  Eigen::VectorXd weights;
};

Problem make_problem(Eigen::Index rows) {
  ModelSpec spec;
  spec.n_channels = 4;
  spec.n_regimes = 3;
  spec.lags = 2;
  Problem p;
  p.params = ModelParams::zeros(spec);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int m = 0; m < 3; ++m) {
    Eigen::MatrixXd d = p.params.design(m);
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = 0.1 * z(rng);
    p.params.set_design(m, d);
    p.params.covariances[static_cast<std::size_t>(m)] *= 1.0 + m;
  }
  Eigen::MatrixXd y(rows + 2, 4);
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = z(rng);
  p.data = make_lagged(y, 2);
  p.regimes = factor_regimes(p.params);
  p.equations = spec.equations();
  p.weights = Eigen::VectorXd::Constant(p.data.rows(), 0.5);
  return p;
}

template <bool Parallel>
void BM_LogDensity(benchmark::State& state) {
  const auto p = make_problem(state.range(0));
  for (auto _ : state) {
    auto t = Parallel ? kernels::parallel::log_density_table(p.data, p.regimes, p.equations)
                      : kernels::serial::log_density_table(p.data, p.regimes, p.equations);
    benchmark::DoNotOptimize(t.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_WeightedMoments(benchmark::State& state) {
  const auto p = make_problem(state.range(0));
  for (auto _ : state) {
    auto m = Parallel ? kernels::parallel::weighted_moments(p.data, p.weights)
                      : kernels::serial::weighted_moments(p.data, p.weights);
    benchmark::DoNotOptimize(m.zz.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_ResidualScatter(benchmark::State& state) {
  const auto p = make_problem(state.range(0));
  const Eigen::MatrixXd coef = p.params.design(0);
  for (auto _ : state) {
    auto s = Parallel ? kernels::parallel::residual_scatter(p.data, coef, p.equations, p.weights)
                      : kernels::serial::residual_scatter(p.data, coef, p.equations, p.weights);
    benchmark::DoNotOptimize(s.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK_TEMPLATE(BM_LogDensity, false)->Arg(1000)->Arg(100000);
BENCHMARK_TEMPLATE(BM_LogDensity, true)->Arg(1000)->Arg(100000);
BENCHMARK_TEMPLATE(BM_WeightedMoments, false)->Arg(1000)->Arg(100000);
BENCHMARK_TEMPLATE(BM_WeightedMoments, true)->Arg(1000)->Arg(100000);
BENCHMARK_TEMPLATE(BM_ResidualScatter, false)->Arg(1000)->Arg(100000);
BENCHMARK_TEMPLATE(BM_ResidualScatter, true)->Arg(1000)->Arg(100000);

BENCHMARK_MAIN();
