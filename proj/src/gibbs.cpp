#include "msvar/gibbs.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "msvar/csv.hpp"
#include "msvar/detail/regression.hpp"
#include "msvar/diagnostics.hpp"
#include "msvar/error.hpp"
#include "msvar/inference.hpp"
#include "msvar/kernels.hpp"

namespace msvar {
namespace {

std::mt19937_64 chain_rng(std::uint64_t seed, int chain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chain), 0x4742u};
  return std::mt19937_64(seq);
}

Eigen::VectorXd standard_normals(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out(i) = z(rng);
  return out;
}

int sample_categorical(const Eigen::VectorXd& weights, std::mt19937_64& rng) {
  const double total = weights.sum();
  std::uniform_real_distribution<double> u(0.0, total);
  double target = u(rng);
  int last = 0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights(i) <= 0.0) continue;
    last = static_cast<int>(i);
    target -= weights(i);
    if (target < 0.0) return last;
  }
  return last;
}

double prior_dof(const GibbsPrior& prior, Eigen::Index ne) {
  return 2.0 * prior.gamma_shape + static_cast<double>(ne) - 1.0;
}

Eigen::MatrixXd prior_scale(const GibbsPrior& prior, Eigen::Index ne) {
  return 2.0 * prior.gamma_rate * Eigen::MatrixXd::Identity(ne, ne);
}

Eigen::MatrixXd indicator_weights(const std::vector<int>& states, int regimes) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(states.size()), regimes);
  for (std::size_t t = 0; t < states.size(); ++t) w(static_cast<Eigen::Index>(t), states[t]) = 1.0;
  return w;
}

std::vector<int> relabel_states(const std::vector<int>& states, const std::vector<int>& perm) {
  std::vector<int> inverse(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inverse[static_cast<std::size_t>(perm[k])] = static_cast<int>(k);
  std::vector<int> out(states.size());
  for (std::size_t t = 0; t < states.size(); ++t) out[t] = inverse[static_cast<std::size_t>(states[t])];
  return out;
}

// Visits the free parameters in export order.
void visit_parameters(const ModelParams& params, const std::vector<std::string>& channels,
                      const std::function<void(std::string, double)>& visit) {
  const auto& spec = params.spec;
  const int M = spec.n_regimes;
  const auto mask = spec.coefficient_mask();
  const auto eqs = spec.equations();
  auto chan = [&](Eigen::Index c) {
    return static_cast<std::size_t>(c) < channels.size() ? channels[static_cast<std::size_t>(c)]
                                                         : "y" + std::to_string(c + 1);
  };
  auto column_name = [&](Eigen::Index a) {
    if (a == 0) return std::string("c");
    const Eigen::Index lag = (a - 1) / spec.n_channels + 1;
    return "A" + std::to_string(lag) + "." + chan((a - 1) % spec.n_channels);
  };
  for (Eigen::Index a = 0; a < spec.regressor_count(); ++a) {
    const bool per_regime = spec.column_switches(a) && M > 1;
    for (int m = 0; m < (per_regime ? M : 1); ++m) {
      const Eigen::MatrixXd b = params.design(m);
      for (auto e : eqs) {
        if (!mask(e, a)) continue;
        const std::string prefix = per_regime ? "r" + std::to_string(m + 1) + "." : std::string();
        visit(prefix + column_name(a) + "." + chan(e), b(e, a));
      }
    }
  }
  const bool cov_switch = spec.switch_cov && M > 1;
  for (int m = 0; m < (cov_switch ? M : 1); ++m) {
    const std::string prefix = cov_switch ? "r" + std::to_string(m + 1) + "." : std::string();
    const auto& S = params.covariances[static_cast<std::size_t>(m)];
    for (std::size_t i = 0; i < eqs.size(); ++i)
      for (std::size_t j = i; j < eqs.size(); ++j)
        visit(prefix + "S." + chan(eqs[i]) + "." + chan(eqs[j]), S(eqs[i], eqs[j]));
  }
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < M; ++j)
      visit("P." + std::to_string(i + 1) + "." + std::to_string(j + 1), params.transition(i, j));
  for (int m = 0; m < M; ++m) visit("pi." + std::to_string(m + 1), params.initial_dist(m));
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<Eigen::VectorXd> split_by_chain(const Eigen::VectorXd& values, const std::vector<int>& chain) {
  std::vector<std::vector<double>> parts;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const auto c = static_cast<std::size_t>(chain[static_cast<std::size_t>(i)]);
    if (parts.size() <= c) parts.resize(c + 1);
    parts[c].push_back(values(i));
  }
  std::vector<Eigen::VectorXd> out;
  for (auto& p : parts)
    if (!p.empty()) out.push_back(Eigen::Map<Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())));
  return out;
}

double chain_ess(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  if (n < 4) return static_cast<double>(n);
  const Eigen::VectorXd c = x.array() - x.mean();
  auto autocov = [&](Eigen::Index k) { return c.head(n - k).dot(c.tail(n - k)) / static_cast<double>(n); };
  const double g0 = autocov(0);
  if (!(g0 > 0.0)) return static_cast<double>(n);
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k + 1 < n; k += 2) {
    double pair = (autocov(k) + autocov(k + 1)) / g0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(n)));
  return static_cast<double>(n) / tau;
}

}  // namespace

void GibbsPrior::require_valid() const {
  if (!(coeff_sd > 0.0)) throw ConfigError("prior coefficient sd must be > 0");
  if (!(gamma_shape > 0.0) || !(gamma_rate > 0.0)) throw ConfigError("prior gamma shape and rate must be > 0");
  if (!(dirichlet > 0.0)) throw ConfigError("prior Dirichlet concentration must be > 0");
  if (!std::isfinite(coeff_mean)) throw ConfigError("prior coefficient mean must be finite");
}

void GibbsConfig::require_valid() const {
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (burn_in < 0 || burn_in >= n_samples) throw ConfigError("burn_in must satisfy 0 <= burn_in < n_samples");
  if (thin < 1) throw ConfigError("thin must be >= 1");
  if (n_chains < 1) throw ConfigError("n_chains must be >= 1");
  prior.require_valid();
}

Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& alpha, std::mt19937_64& rng) {
  Eigen::VectorXd g(alpha.size());
  for (Eigen::Index i = 0; i < alpha.size(); ++i) {
    std::gamma_distribution<double> gamma(alpha(i), 1.0);
    g(i) = gamma(rng);
  }
  const double total = g.sum();
  if (!(total > 0.0)) {
    // All variates underflowed (tiny concentrations): put the mass on the
    // largest concentration.
    Eigen::Index k = 0;
    alpha.maxCoeff(&k);
    g.setZero();
    g(k) = 1.0;
    return g;
  }
  return g / total;
}

Eigen::MatrixXd count_transitions(const std::vector<int>& path, int regimes) {
  Eigen::MatrixXd n = Eigen::MatrixXd::Zero(regimes, regimes);
  for (std::size_t t = 1; t < path.size(); ++t) n(path[t - 1], path[t]) += 1.0;
  return n;
}

Eigen::MatrixXd sample_transition_rows(const std::vector<int>& path, int regimes, double alpha,
                                       std::mt19937_64& rng) {
  const Eigen::MatrixXd n = count_transitions(path, regimes);
  Eigen::MatrixXd P(regimes, regimes);
  for (int i = 0; i < regimes; ++i)
    P.row(i) = sample_dirichlet((n.row(i).array() + alpha).matrix().transpose(), rng).transpose();
  return P;
}

Eigen::MatrixXd sample_inverse_wishart(double dof, const Eigen::MatrixXd& scale, std::mt19937_64& rng) {
  const Eigen::Index d = scale.rows();
  if (!(dof > static_cast<double>(d) - 1.0)) throw ConfigError("inverse-Wishart needs dof > dimension - 1");
  const Eigen::MatrixXd scale_inv = scale.llt().solve(Eigen::MatrixXd::Identity(d, d));
  const Eigen::MatrixXd L = scale_inv.llt().matrixL();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
  std::normal_distribution<double> z(0.0, 1.0);
  for (Eigen::Index i = 0; i < d; ++i) {
    std::chi_squared_distribution<double> chi(dof - static_cast<double>(i));
    A(i, i) = std::sqrt(chi(rng));
    for (Eigen::Index j = 0; j < i; ++j) A(i, j) = z(rng);
  }
  const Eigen::MatrixXd LA = L * A;
  const Eigen::MatrixXd W = LA * LA.transpose();
  Eigen::MatrixXd sigma = W.llt().solve(Eigen::MatrixXd::Identity(d, d));
  return 0.5 * (sigma + sigma.transpose());
}

std::vector<int> sample_states(const Eigen::MatrixXd& log_density, const ModelParams& params,
                               std::mt19937_64& rng, double* log_lik) {
  const auto probs = hamilton_filter(log_density, params);
  if (log_lik) *log_lik = probs.log_likelihood;
  const Eigen::Index T = probs.rows();
  std::vector<int> path(static_cast<std::size_t>(T));
  path.back() = sample_categorical(probs.filtered.row(T - 1).transpose(), rng);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const Eigen::VectorXd w =
        probs.filtered.row(t).transpose().cwiseProduct(params.transition.col(path[static_cast<std::size_t>(t + 1)]));
    path[static_cast<std::size_t>(t)] = sample_categorical(w, rng);
  }
  return path;
}

std::vector<int> sample_states(const ObservationSeries& series, const ModelParams& params, std::mt19937_64& rng,
                               double* log_lik) {
  return sample_states(log_density_table(series, params), params, rng, log_lik);
}

PriorDraw sample_prior(const ModelSpec& spec, const GibbsPrior& prior, Eigen::Index rows, std::mt19937_64& rng) {
  spec.require_valid();
  prior.require_valid();
  const int M = spec.n_regimes;
  const auto Ne = static_cast<Eigen::Index>(spec.equations().size());
  PriorDraw out{ModelParams::zeros(spec), {}};
  const auto layout = detail::CoefficientLayout::build(spec);
  const Eigen::VectorXd theta = (prior.coeff_mean + prior.coeff_sd * standard_normals(layout.size, rng).array()).matrix();
  detail::scatter_coefficients(layout, theta, out.params);
  const bool cov_switch = spec.switch_cov && M > 1;
  Eigen::MatrixXd shared;
  for (int m = 0; m < M; ++m) {
    if (cov_switch || m == 0) shared = sample_inverse_wishart(prior_dof(prior, Ne), prior_scale(prior, Ne), rng);
    out.params.covariances[static_cast<std::size_t>(m)] = detail::embed_covariance(spec, shared);
  }
  const Eigen::VectorXd alpha = Eigen::VectorXd::Constant(M, prior.dirichlet);
  for (int i = 0; i < M; ++i) out.params.transition.row(i) = sample_dirichlet(alpha, rng).transpose();
  out.params.initial_dist = sample_dirichlet(alpha, rng);
  out.states.resize(static_cast<std::size_t>(rows));
  if (rows > 0) {
    out.states[0] = sample_categorical(out.params.initial_dist, rng);
    for (std::size_t t = 1; t < out.states.size(); ++t)
      out.states[t] = sample_categorical(out.params.transition.row(out.states[t - 1]).transpose(), rng);
  }
  return out;
}

void regenerate_data(Eigen::MatrixXd& data, const ModelParams& params, const std::vector<int>& states,
                     std::mt19937_64& rng) {
  const int p = params.lags();
  if (static_cast<Eigen::Index>(states.size()) != data.rows() - p)
    throw InputError("state path length does not match the effective rows");
  const auto eqs = params.spec.equations();
  const auto Ne = static_cast<Eigen::Index>(eqs.size());
  const auto regimes = factor_regimes(params);
  Eigen::VectorXd z(params.spec.regressor_count());
  for (Eigen::Index t = p; t < data.rows(); ++t) {
    z(0) = 1.0;
    for (int i = 1; i <= p; ++i) z.segment(params.spec.lag_column(i, 0), data.cols()) = data.row(t - i).transpose();
    const auto& g = regimes[static_cast<std::size_t>(states[static_cast<std::size_t>(t - p)])];
    const Eigen::VectorXd y = g.coef * z + g.chol_lower * standard_normals(Ne, rng);
    for (Eigen::Index e = 0; e < Ne; ++e) data(t, eqs[static_cast<std::size_t>(e)]) = y(e);
  }
}

GibbsSampler::GibbsSampler(const ObservationSeries& series, const ModelParams& init, const GibbsPrior& prior,
                           std::uint64_t seed, int chain)
    : spec_(init.spec), prior_(prior), data_(series.data), params_(init), rng_(chain_rng(seed, chain)) {
  prior_.require_valid();
  lagged_ = make_lagged(data_, spec_.lags);
  sample_states();
}

void GibbsSampler::set_data(const Eigen::MatrixXd& data) {
  if (data.rows() != data_.rows() || data.cols() != data_.cols()) throw InputError("replacement data has a different shape");
  data_ = data;
  lagged_ = make_lagged(data_, spec_.lags);
}

void GibbsSampler::set_state(const ModelParams& params, const std::vector<int>& states) {
  if (static_cast<Eigen::Index>(states.size()) != lagged_.rows()) throw InputError("state path length mismatch");
  params_ = params;
  states_ = states;
}

void GibbsSampler::sample_parameters() {
  const int M = spec_.n_regimes;
  const auto eqs = spec_.equations();
  const auto Ne = static_cast<Eigen::Index>(eqs.size());
  const Eigen::MatrixXd w = indicator_weights(states_, M);

  std::vector<kernels::Moments> moments(static_cast<std::size_t>(M));
  std::vector<Eigen::MatrixXd> precisions(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    moments[static_cast<std::size_t>(m)] = kernels::parallel::weighted_moments(lagged_, w.col(m));
    const Eigen::MatrixXd block = detail::equation_block(params_, m);
    precisions[static_cast<std::size_t>(m)] = block.llt().solve(Eigen::MatrixXd::Identity(Ne, Ne));
  }
  const auto layout = detail::CoefficientLayout::build(spec_);
  auto ne = detail::assemble_normal_equations(spec_, layout, moments, precisions);
  const double prior_prec = 1.0 / (prior_.coeff_sd * prior_.coeff_sd);
  ne.lhs.diagonal().array() += prior_prec;
  ne.rhs.array() += prior_prec * prior_.coeff_mean;
  Eigen::LLT<Eigen::MatrixXd> llt(ne.lhs);
  if (llt.info() != Eigen::Success) throw NumericalError("coefficient posterior precision is not positive definite");
  const Eigen::VectorXd mean = llt.solve(ne.rhs);
  const Eigen::VectorXd theta =
      mean + llt.matrixU().solve(standard_normals(layout.size, rng_));
  ModelParams next = ModelParams::zeros(spec_);
  detail::scatter_coefficients(layout, theta, next);

  const double dof0 = prior_dof(prior_, Ne);
  const Eigen::MatrixXd scale0 = prior_scale(prior_, Ne);
  std::vector<Eigen::MatrixXd> scatter(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m)
    scatter[static_cast<std::size_t>(m)] =
        kernels::parallel::residual_scatter(lagged_, detail::equation_coefficients(next, m), eqs, w.col(m));
  if (spec_.switch_cov && M > 1) {
    for (int m = 0; m < M; ++m) {
      const auto& s = scatter[static_cast<std::size_t>(m)];
      const Eigen::MatrixXd block = sample_inverse_wishart(dof0 + moments[static_cast<std::size_t>(m)].weight,
                                                           scale0 + 0.5 * (s + s.transpose()), rng_);
      next.covariances[static_cast<std::size_t>(m)] = detail::embed_covariance(spec_, block);
    }
  } else {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(Ne, Ne);
    for (const auto& part : scatter) s += part;
    const Eigen::MatrixXd block =
        sample_inverse_wishart(dof0 + static_cast<double>(states_.size()), scale0 + 0.5 * (s + s.transpose()), rng_);
    for (int m = 0; m < M; ++m) next.covariances[static_cast<std::size_t>(m)] = detail::embed_covariance(spec_, block);
  }

  next.transition = sample_transition_rows(states_, M, prior_.dirichlet, rng_);
  Eigen::VectorXd alpha = Eigen::VectorXd::Constant(M, prior_.dirichlet);
  alpha(states_.front()) += 1.0;
  next.initial_dist = sample_dirichlet(alpha, rng_);
  params_ = std::move(next);
}

void GibbsSampler::sample_states() {
  states_ = msvar::sample_states(log_density_table(lagged_, params_), params_, rng_, &log_lik_);
}

void GibbsSampler::sweep() {
  sample_parameters();
  sample_states();
}

std::vector<std::string> parameter_names(const ModelParams& params, const std::vector<std::string>& channels) {
  std::vector<std::string> names;
  visit_parameters(params, channels, [&](std::string name, double) { names.push_back(std::move(name)); });
  return names;
}

Eigen::VectorXd flatten_parameters(const ModelParams& params) {
  std::vector<double> values;
  visit_parameters(params, {}, [&](const std::string&, double v) { values.push_back(v); });
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

double effective_sample_size(const Eigen::VectorXd& values, const std::vector<int>& chain) {
  double total = 0.0;
  for (const auto& part : split_by_chain(values, chain)) total += chain_ess(part);
  return total;
}

double split_rhat(const Eigen::VectorXd& values, const std::vector<int>& chain) {
  std::vector<Eigen::VectorXd> halves;
  for (const auto& part : split_by_chain(values, chain)) {
    const Eigen::Index n = part.size() / 2;
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    halves.push_back(part.head(n));
    halves.push_back(part.tail(n));
  }
  Eigen::Index n = halves.front().size();
  for (const auto& h : halves) n = std::min(n, h.size());
  const auto m = static_cast<double>(halves.size());
  Eigen::VectorXd means(static_cast<Eigen::Index>(halves.size()));
  double within = 0.0;
  for (std::size_t j = 0; j < halves.size(); ++j) {
    const Eigen::VectorXd h = halves[j].head(n);
    means(static_cast<Eigen::Index>(j)) = h.mean();
    within += (h.array() - h.mean()).square().sum() / static_cast<double>(n - 1);
  }
  within /= m;
  const double nn = static_cast<double>(n);
  const double between = nn * (means.array() - means.mean()).square().sum() / (m - 1.0);
  if (!(within > 0.0)) return between > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  const double var_plus = (nn - 1.0) / nn * within + between / nn;
  return std::sqrt(var_plus / within);
}

std::vector<ParameterSummary> summarize(const PosteriorSamples& samples) {
  std::vector<ParameterSummary> out;
  for (Eigen::Index j = 0; j < samples.values.cols(); ++j) {
    const Eigen::VectorXd col = samples.values.col(j);
    ParameterSummary s;
    s.name = samples.names[static_cast<std::size_t>(j)];
    s.mean = col.mean();
    s.sd = col.size() > 1 ? std::sqrt((col.array() - s.mean).square().sum() / static_cast<double>(col.size() - 1)) : 0.0;
    std::vector<double> sorted(col.data(), col.data() + col.size());
    std::sort(sorted.begin(), sorted.end());
    s.q05 = quantile_sorted(sorted, 0.05);
    s.q50 = quantile_sorted(sorted, 0.50);
    s.q95 = quantile_sorted(sorted, 0.95);
    s.ess = effective_sample_size(col, samples.chain);
    s.rhat = split_rhat(col, samples.chain);
    out.push_back(std::move(s));
  }
  return out;
}

GibbsResult fit_gibbs(const ObservationSeries& series, const ModelSpec& spec, const GibbsConfig& config) {
  spec.require_valid();
  config.require_valid();
  if (series.n_channels() != spec.n_channels)
    throw InputError("series has " + std::to_string(series.n_channels()) + " channels, spec expects " +
                     std::to_string(spec.n_channels));
  const Eigen::Index rows = series.length() - spec.lags;
  const Eigen::Index needed = min_rows_per_regime(spec) * spec.n_regimes;
  if (rows < needed)
    throw InputError("insufficient data: " + std::to_string(rows) + " effective rows, need " + std::to_string(needed));

  struct ChainOutput {
    std::vector<ModelParams> draws;
    std::vector<double> log_lik;
    Eigen::MatrixXd state_counts;
    std::vector<std::string> warnings;
    std::string error;
  };
  const int C = config.n_chains;
  const int M = spec.n_regimes;
  std::vector<ChainOutput> chains(static_cast<std::size_t>(C));

#pragma omp parallel for schedule(dynamic)
  for (int c = 0; c < C; ++c) {
    auto& out = chains[static_cast<std::size_t>(c)];
    ScopedWarningSink sink;
    try {
      const auto init = initial_params(series, spec, InitStrategy::kmeans_on_residuals, config.seed, 2 * c);
      GibbsSampler sampler(series, init, config.prior, config.seed, c);
      out.state_counts = Eigen::MatrixXd::Zero(rows, M);
      for (int i = 0; i < config.n_samples; ++i) {
        sampler.sweep();
        if (!std::isfinite(sampler.log_likelihood()) || !flatten_parameters(sampler.params()).allFinite())
          throw NumericalError("non-finite Gibbs draw at iteration " + std::to_string(i) + " of chain " +
                               std::to_string(c));
        if (i < config.burn_in || (i - config.burn_in + 1) % config.thin != 0) continue;
        ModelParams draw = sampler.params();
        std::vector<int> states = sampler.states();
        if (config.relabel) {
          const auto perm = variance_order(draw);
          draw = permute_regimes(draw, perm);
          states = relabel_states(states, perm);
        }
        for (std::size_t t = 0; t < states.size(); ++t) out.state_counts(static_cast<Eigen::Index>(t), states[t]) += 1.0;
        out.draws.push_back(std::move(draw));
        out.log_lik.push_back(sampler.log_likelihood());
      }
    } catch (const std::exception& e) {
      out.error = e.what();
    }
    out.warnings = sink.take();
  }
  for (int c = 0; c < C; ++c)
    if (!chains[static_cast<std::size_t>(c)].error.empty()) {
      const auto& msg = chains[static_cast<std::size_t>(c)].error;
      if (msg.rfind("non-finite", 0) == 0) throw NumericalError(msg);
      throw NumericalError("Gibbs chain " + std::to_string(c) + " failed: " + msg);
    }

  GibbsResult result;
  auto& samples = result.samples;
  samples.names = parameter_names(chains.front().draws.empty() ? ModelParams::zeros(spec) : chains.front().draws.front(),
                                  series.channels);
  Eigen::Index total = 0;
  for (const auto& ch : chains) total += static_cast<Eigen::Index>(ch.draws.size());
  if (total == 0) throw ConfigError("no draws kept; increase n_samples or lower burn_in/thin");
  samples.values.resize(total, static_cast<Eigen::Index>(samples.names.size()));
  samples.state_frequency = Eigen::MatrixXd::Zero(rows, M);
  Eigen::Index r = 0;
  for (int c = 0; c < C; ++c) {
    auto& ch = chains[static_cast<std::size_t>(c)];
    for (std::size_t d = 0; d < ch.draws.size(); ++d) {
      samples.values.row(r++) = flatten_parameters(ch.draws[d]).transpose();
      samples.chain.push_back(c);
      samples.log_likelihood.push_back(ch.log_lik[d]);
    }
    samples.state_frequency += ch.state_counts;
    for (auto& d : ch.draws) samples.draws.push_back(std::move(d));
  }
  samples.state_frequency /= static_cast<double>(total);
  samples.summary = summarize(samples);

  ModelParams mean = ModelParams::zeros(spec);
  mean.intercepts.setZero();
  mean.transition.setZero();
  mean.initial_dist.setZero();
  for (auto& cov : mean.covariances) cov.setZero();
  for (const auto& d : samples.draws) {
    mean.intercepts += d.intercepts;
    mean.transition += d.transition;
    mean.initial_dist += d.initial_dist;
    for (int m = 0; m < M; ++m) {
      mean.covariances[static_cast<std::size_t>(m)] += d.covariances[static_cast<std::size_t>(m)];
      for (int i = 0; i < spec.lags; ++i)
        mean.coeffs[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)] +=
            d.coeffs[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)];
    }
  }
  const double n = static_cast<double>(total);
  mean.intercepts /= n;
  mean.initial_dist /= n;
  mean.initial_dist /= mean.initial_dist.sum();
  mean.transition /= n;
  for (int i = 0; i < M; ++i) mean.transition.row(i) /= mean.transition.row(i).sum();
  for (int m = 0; m < M; ++m) {
    mean.covariances[static_cast<std::size_t>(m)] /= n;
    for (auto& a : mean.coeffs[static_cast<std::size_t>(m)]) a /= n;
  }

  auto& fit = result.fit;
  fit.method = "gibbs";
  fit.params = std::move(mean);
  {
    ScopedWarningSink sink;
    fit.probs = infer_regimes(series, fit.params);
    auto msgs = sink.take();
    fit.warnings.insert(fit.warnings.end(), msgs.begin(), msgs.end());
  }
  fit.classification = classify(samples.state_frequency);
  for (int c = 0; c < C; ++c)
    for (const auto& w : chains[static_cast<std::size_t>(c)].warnings)
      fit.warnings.push_back("chain " + std::to_string(c) + ": " + w);
  double worst = 1.0;
  for (const auto& s : samples.summary)
    if (!std::isnan(s.rhat)) worst = std::max(worst, s.rhat);
  fit.converged = worst <= 1.1;
  fit.trace.converged = fit.converged;
  fit.trace.log_likelihood = samples.log_likelihood;
  if (!fit.converged) fit.warnings.push_back("split R-hat reaches " + format_short(worst) + " (> 1.1)");
  return result;
}

std::string chain_to_csv(const PosteriorSamples& samples) {
  std::string out = "chain,draw,loglik";
  for (const auto& n : samples.names) out += "," + n;
  out += "\n";
  int prev = -1;
  int draw = 0;
  for (Eigen::Index r = 0; r < samples.values.rows(); ++r) {
    const int c = samples.chain[static_cast<std::size_t>(r)];
    draw = c == prev ? draw + 1 : 1;
    prev = c;
    out += std::to_string(c + 1) + "," + std::to_string(draw) + "," +
           format_exact(samples.log_likelihood[static_cast<std::size_t>(r)]);
    for (Eigen::Index j = 0; j < samples.values.cols(); ++j) out += "," + format_exact(samples.values(r, j));
    out += "\n";
  }
  return out;
}

nlohmann::json summary_to_json(const std::vector<ParameterSummary>& summary) {
  nlohmann::json j = nlohmann::json::object();
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  for (const auto& s : summary)
    j[s.name] = {{"mean", num(s.mean)}, {"sd", num(s.sd)}, {"q05", num(s.q05)}, {"q50", num(s.q50)},
                 {"q95", num(s.q95)}, {"ess", num(s.ess)}, {"rhat", num(s.rhat)}};
  return j;
}

}  // namespace msvar
