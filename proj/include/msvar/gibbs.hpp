#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "msvar/em.hpp"
#include "msvar/model.hpp"
#include "msvar/series.hpp"

namespace msvar {

// Conjugate priors: free coefficients N(coeff_mean, coeff_sd^2) each;
// precision Gamma(gamma_shape, gamma_rate) for a scalar variance, and its
// inverse-Wishart generalisation IW(2 shape + N_e - 1, 2 rate I) for an
// N_e x N_e covariance; every transition row and the initial distribution
// Dir(dirichlet, ..., dirichlet).
struct GibbsPrior {
  double coeff_mean = 0.0;
  double coeff_sd = 10.0;
  double gamma_shape = 2.0;
  double gamma_rate = 1.0;
  double dirichlet = 1.0;

  void require_valid() const;
};

struct GibbsConfig {
  int n_samples = 5000;  // total sweeps per chain, burn-in included
  int burn_in = 1000;
  int thin = 2;
  int n_chains = 1;
  std::uint64_t seed = 0;
  GibbsPrior prior;
  bool relabel = true;  // sort every kept draw by ascending residual variance

  void require_valid() const;
  // floor((n_samples - burn_in) / thin)
  int kept_per_chain() const { return (n_samples - burn_in) / thin; }
};

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
  double ess = 0.0;
  double rhat = 1.0;
};

struct PosteriorSamples {
  std::vector<std::string> names;  // flattened parameter names
  Eigen::MatrixXd values;  // kept draws x parameters, chains stacked in order
  std::vector<int> chain;  // chain index of each kept draw
  std::vector<ModelParams> draws;
  std::vector<double> log_likelihood;  // observed-data log-likelihood of each kept draw
  Eigen::MatrixXd state_frequency;  // T_eff x M share of kept draws in each regime
  double acceptance_rate = 1.0;  // every Gibbs proposal is accepted
  std::vector<ParameterSummary> summary;
};

struct GibbsResult {
  PosteriorSamples samples;
  FitResult fit;  // posterior-mean parameters, posterior-mode classification
};

// Dirichlet draw via normalised gamma variates.
Eigen::VectorXd sample_dirichlet(const Eigen::VectorXd& alpha, std::mt19937_64& rng);
// n(i, j) = number of i -> j moves along the path.
Eigen::MatrixXd count_transitions(const std::vector<int>& path, int regimes);
// Row i ~ Dir(n_i1 + alpha, ..., n_iM + alpha).
Eigen::MatrixXd sample_transition_rows(const std::vector<int>& path, int regimes, double alpha,
                                       std::mt19937_64& rng);
// Inverse-Wishart draw with `dof` degrees of freedom and scale matrix.
Eigen::MatrixXd sample_inverse_wishart(double dof, const Eigen::MatrixXd& scale, std::mt19937_64& rng);

// Forward filter, backward sample: one exact draw from Pr(s | y, params)
// over the effective rows. The filter log-likelihood is returned through
// log_lik when given.
std::vector<int> sample_states(const ObservationSeries& series, const ModelParams& params, std::mt19937_64& rng,
                               double* log_lik = nullptr);
std::vector<int> sample_states(const Eigen::MatrixXd& log_density, const ModelParams& params,
                               std::mt19937_64& rng, double* log_lik = nullptr);

// Parameters and a state path drawn from the prior.
struct PriorDraw {
  ModelParams params;
  std::vector<int> states;
};
PriorDraw sample_prior(const ModelSpec& spec, const GibbsPrior& prior, Eigen::Index rows, std::mt19937_64& rng);

// Replaces rows lags..T-1 of data with fresh draws given params and the
// state path; the first `lags` rows are kept as conditioning values.
void regenerate_data(Eigen::MatrixXd& data, const ModelParams& params, const std::vector<int>& states,
                     std::mt19937_64& rng);

// One chain of the sampler. Each sweep draws parameters given the state
// path, then the state path given the parameters.
class GibbsSampler {
 public:
  GibbsSampler(const ObservationSeries& series, const ModelParams& init, const GibbsPrior& prior,
               std::uint64_t seed, int chain = 0);

  void sample_parameters();
  void sample_states();
  void sweep();

  // Swaps in new observations of the same shape; the state path is kept.
  void set_data(const Eigen::MatrixXd& data);
  void set_state(const ModelParams& params, const std::vector<int>& states);

  const ModelParams& params() const { return params_; }
  const std::vector<int>& states() const { return states_; }
  double log_likelihood() const { return log_lik_; }
  const Eigen::MatrixXd& data() const { return data_; }
  std::mt19937_64& rng() { return rng_; }

 private:
  ModelSpec spec_;
  GibbsPrior prior_;
  Eigen::MatrixXd data_;
  LaggedData lagged_;
  ModelParams params_;
  std::vector<int> states_;
  double log_lik_ = 0.0;
  std::mt19937_64 rng_;
};

GibbsResult fit_gibbs(const ObservationSeries& series, const ModelSpec& spec, const GibbsConfig& config);

// Flattened free parameters in a stable order, with matching names.
std::vector<std::string> parameter_names(const ModelParams& params, const std::vector<std::string>& channels);
Eigen::VectorXd flatten_parameters(const ModelParams& params);

// Geyer initial-positive-sequence effective sample size, summed over chains.
double effective_sample_size(const Eigen::VectorXd& values, const std::vector<int>& chain);
// Split R-hat: each chain is cut in half before the between/within ratio.
double split_rhat(const Eigen::VectorXd& values, const std::vector<int>& chain);
std::vector<ParameterSummary> summarize(const PosteriorSamples& samples);

std::string chain_to_csv(const PosteriorSamples& samples);  // chain,draw,loglik,<names>
nlohmann::json summary_to_json(const std::vector<ParameterSummary>& summary);

}  // namespace msvar
