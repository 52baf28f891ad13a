#include "msvar/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include "msvar/csv.hpp"
#include "msvar/detail/regression.hpp"
#include "msvar/diagnostics.hpp"
#include "msvar/error.hpp"
#include "msvar/kernels.hpp"

namespace msvar {
namespace {

Eigen::MatrixXd inverse_spd(const Eigen::MatrixXd& s) {
  return s.llt().solve(Eigen::MatrixXd::Identity(s.rows(), s.cols()));
}

bool all_columns_switch(const ModelSpec& spec) {
  return spec.lags == 0 ? spec.switch_intercept : (spec.switch_intercept && spec.switch_coeffs);
}

std::mt19937_64 restart_rng(std::uint64_t seed, int restart) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(restart), 0x4d53u};
  return std::mt19937_64(seq);
}

std::vector<int> kmeans_labels(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd centers(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = x.row(pick(rng));
  Eigen::VectorXd d2(n);
  for (int c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < c; ++j) best = std::min(best, (x.row(i) - centers.row(j)).squaredNorm());
      d2(i) = best;
    }
    const double total = d2.sum();
    Eigen::Index chosen = pick(rng);
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2(i);
        if (target <= 0.0) {
          chosen = i;
          break;
        }
      }
    }
    centers.row(c) = x.row(chosen);
  }
  std::vector<int> labels(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (labels[static_cast<std::size_t>(i)] != best) changed = true;
      labels[static_cast<std::size_t>(i)] = best;
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      counts(labels[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (counts(c) > 0.0) {
        centers.row(c) = sums.row(c) / counts(c);
      } else {
        // Re-seed an empty cluster at the point farthest from its center.
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d = (x.row(i) - centers.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers.row(c) = x.row(far);
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
  }
  return labels;
}

std::vector<int> sticky_labels(Eigen::Index n, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> any(0, k - 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<int> labels(static_cast<std::size_t>(n));
  int s = any(rng);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t > 0 && u(rng) > 0.95) s = any(rng);
    labels[static_cast<std::size_t>(t)] = s;
  }
  return labels;
}

Eigen::MatrixXd soft_responsibilities(const std::vector<int>& labels, int k, double confidence) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(labels.size()), k,
                                                (1.0 - confidence) / k);
  for (std::size_t t = 0; t < labels.size(); ++t) r(static_cast<Eigen::Index>(t), labels[t]) += confidence;
  return r;
}

Eigen::MatrixXd pseudo_transition_counts(const Eigen::MatrixXd& resp) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(resp.cols(), resp.cols());
  for (Eigen::Index r = 0; r + 1 < resp.rows(); ++r)
    counts.noalias() += resp.row(r).transpose() * resp.row(r + 1);
  return counts;
}

Eigen::MatrixXd transition_counts(const RegimeProbabilities& probs, int M) {
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(M, M);
  for (const auto& p : probs.pairwise) counts += p;
  return counts;
}

RegimeProbabilities e_step(const LaggedData& data, const ModelParams& params) {
  auto probs = hamilton_filter(log_density_table(data, params), params);
  smooth(probs, params);
  return probs;
}

FitResult finalize(FitResult fit) {
  const auto perm = variance_order(fit.params);
  fit.params = permute_regimes(fit.params, perm);
  permute_probabilities(fit.probs, perm);
  fit.classification = classify(fit.probs.smoothed);
  return fit;
}

bool near_constant(const Eigen::VectorXd& x) {
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  return var <= 1e-12 * (1.0 + mean * mean);
}

}  // namespace

void EmConfig::require_valid() const {
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(rel_tol > 0.0)) throw ConfigError("rel_tol must be > 0");
  if (n_restarts < 1) throw ConfigError("n_restarts must be >= 1");
  if (!(ridge >= 0.0)) throw ConfigError("ridge must be >= 0");
}

Eigen::Index min_rows_per_regime(const ModelSpec& spec) {
  return spec.n_channels * spec.lags + spec.n_channels + 1;
}

std::vector<int> variance_order(const ModelParams& params) {
  std::vector<int> perm(static_cast<std::size_t>(params.n_regimes()));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> key(perm.size());
  for (int m = 0; m < params.n_regimes(); ++m) key[static_cast<std::size_t>(m)] = detail::equation_block(params, m).trace();
  std::stable_sort(perm.begin(), perm.end(), [&](int a, int b) { return key[static_cast<std::size_t>(a)] < key[static_cast<std::size_t>(b)]; });
  return perm;
}

void permute_probabilities(RegimeProbabilities& probs, const std::vector<int>& perm) {
  const auto M = static_cast<Eigen::Index>(perm.size());
  auto permute_cols = [&](Eigen::MatrixXd& t) {
    if (t.size() == 0) return;
    Eigen::MatrixXd out(t.rows(), M);
    for (Eigen::Index k = 0; k < M; ++k) out.col(k) = t.col(perm[static_cast<std::size_t>(k)]);
    t = std::move(out);
  };
  permute_cols(probs.filtered);
  permute_cols(probs.predicted);
  permute_cols(probs.smoothed);
  for (auto& p : probs.pairwise) {
    Eigen::MatrixXd out(M, M);
    for (Eigen::Index k = 0; k < M; ++k)
      for (Eigen::Index l = 0; l < M; ++l) out(k, l) = p(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(l)]);
    p = std::move(out);
  }
}

ModelParams m_step(const LaggedData& data, const Eigen::MatrixXd& smoothed,
                   const Eigen::MatrixXd& counts, const ModelSpec& spec,
                   const ModelParams* previous, double ridge) {
  spec.require_valid();
  const int M = spec.n_regimes;
  const auto eqs = spec.equations();
  const auto Ne = static_cast<Eigen::Index>(eqs.size());
  if (smoothed.rows() != data.rows() || smoothed.cols() != M)
    throw InputError("probability table does not match data/regime count");

  std::vector<kernels::Moments> moments(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) moments[static_cast<std::size_t>(m)] = kernels::parallel::weighted_moments(data, smoothed.col(m));

  ModelParams out = ModelParams::zeros(spec);
  const auto layout = detail::CoefficientLayout::build(spec);
  const bool exact_ols = detail::ols_is_exact(spec);
  const Eigen::Index min_rows = min_rows_per_regime(spec);

  auto update_coefficients = [&](const std::vector<Eigen::MatrixXd>& precisions) {
    if (exact_ols) {
      if (M == 1 || all_columns_switch(spec)) {
        for (int m = 0; m < M; ++m) {
          const auto& mo = moments[static_cast<std::size_t>(m)];
          out.set_design(m, detail::solve_spd(mo.zz, mo.zy).transpose());
        }
      } else {
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(spec.regressor_count(), spec.regressor_count());
        Eigen::MatrixXd H = Eigen::MatrixXd::Zero(spec.regressor_count(), spec.n_channels);
        for (const auto& mo : moments) {
          G += mo.zz;
          H += mo.zy;
        }
        const Eigen::MatrixXd b = detail::solve_spd(G, H).transpose();
        for (int m = 0; m < M; ++m) out.set_design(m, b);
      }
      return;
    }
    const auto ne = detail::assemble_normal_equations(spec, layout, moments, precisions);
    const Eigen::VectorXd theta = detail::solve_spd(ne.lhs, ne.rhs);
    detail::scatter_coefficients(layout, theta, out);
  };

  auto update_covariances = [&]() {
    std::vector<Eigen::MatrixXd> scatter(static_cast<std::size_t>(M));
    Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(Ne, Ne);
    double pooled_weight = 0.0;
    for (int m = 0; m < M; ++m) {
      auto& s = scatter[static_cast<std::size_t>(m)];
      s = kernels::parallel::residual_scatter(data, detail::equation_coefficients(out, m), eqs, smoothed.col(m));
      s = 0.5 * (s + s.transpose()).eval();
      pooled += s;
      pooled_weight += moments[static_cast<std::size_t>(m)].weight;
    }
    pooled /= pooled_weight;
    for (int m = 0; m < M; ++m) {
      const double w = moments[static_cast<std::size_t>(m)].weight;
      Eigen::MatrixXd block;
      if (spec.switch_cov && M > 1) {
        if (w < static_cast<double>(min_rows)) {
          warn("regime " + std::to_string(m + 1) + " has effective weight " + format_short(w) +
               " < " + std::to_string(min_rows) + "; using the pooled covariance");
          block = pooled;
        } else {
          block = scatter[static_cast<std::size_t>(m)] / w;
        }
      } else {
        block = pooled;
      }
      block.diagonal().array() += ridge;
      out.covariances[static_cast<std::size_t>(m)] = detail::embed_covariance(spec, block);
    }
  };

  auto precisions_of = [&](const ModelParams& p) {
    std::vector<Eigen::MatrixXd> prec(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) prec[static_cast<std::size_t>(m)] = inverse_spd(detail::equation_block(p, m));
    return prec;
  };

  if (exact_ols) {
    update_coefficients({});
    update_covariances();
  } else if (previous) {
    update_coefficients(precisions_of(*previous));
    update_covariances();
  } else {
    std::vector<Eigen::MatrixXd> prec(static_cast<std::size_t>(M), Eigen::MatrixXd::Identity(Ne, Ne));
    Eigen::MatrixXd last = Eigen::MatrixXd::Zero(spec.n_channels, spec.regressor_count());
    for (int iter = 0; iter < 100; ++iter) {
      update_coefficients(prec);
      update_covariances();
      prec = precisions_of(out);
      const Eigen::MatrixXd now = out.design(0);
      const double change = (now - last).norm();
      last = now;
      if (iter > 0 && change <= 1e-12 * std::max(1.0, now.norm())) break;
    }
  }

  for (int i = 0; i < M; ++i) {
    const double total = counts.row(i).sum();
    if (total > 1e-300) {
      out.transition.row(i) = counts.row(i) / total;
    } else if (previous) {
      out.transition.row(i) = previous->transition.row(i);
    }
  }
  const double first = smoothed.row(0).sum();
  out.initial_dist = smoothed.row(0).transpose() / first;
  return out;
}

ModelParams m_step(const ObservationSeries& series, const RegimeProbabilities& probs,
                   const ModelSpec& spec, const ModelParams* previous, double ridge) {
  const auto data = make_lagged(series.data, spec.lags);
  return m_step(data, probs.smoothed, transition_counts(probs, spec.n_regimes), spec, previous, ridge);
}

FitResult run_em(const ObservationSeries& series, const ModelParams& init, const EmConfig& config) {
  config.require_valid();
  const auto& spec = init.spec;
  const auto data = make_lagged(series.data, spec.lags);
  FitResult fit;
  fit.method = "em";
  ScopedWarningSink sink;
  fit.params = init;
  fit.probs = e_step(data, fit.params);
  fit.trace.log_likelihood.push_back(fit.probs.log_likelihood);
  for (int it = 1; it <= config.max_iters; ++it) {
    const double prev = fit.probs.log_likelihood;
    ModelParams next = m_step(data, fit.probs.smoothed, transition_counts(fit.probs, spec.n_regimes),
                              spec, &fit.params, config.ridge);
    RegimeProbabilities probs = e_step(data, next);
    const double ll = probs.log_likelihood;
    if (!std::isfinite(ll)) throw NumericalError("log-likelihood became non-finite at EM iteration " + std::to_string(it));
    fit.params = std::move(next);
    fit.probs = std::move(probs);
    fit.trace.log_likelihood.push_back(ll);
    fit.trace.iterations = it;
    const double scale = std::max(1.0, std::abs(prev));
    if (ll < prev - 1e-8 * scale)
      warn("log-likelihood decreased at EM iteration " + std::to_string(it) + " by " + format_short(prev - ll));
    if (std::abs(ll - prev) <= config.rel_tol * scale) {
      fit.trace.converged = true;
      break;
    }
  }
  fit.converged = fit.trace.converged;
  fit = finalize(std::move(fit));
  auto msgs = sink.take();
  fit.warnings.insert(fit.warnings.end(), msgs.begin(), msgs.end());
  return fit;
}

ModelParams initial_params(const ObservationSeries& series, const ModelSpec& spec,
                           InitStrategy strategy, std::uint64_t seed, int restart) {
  spec.require_valid();
  const auto data = make_lagged(series.data, spec.lags);
  const int M = spec.n_regimes;
  const Eigen::Index rows = data.rows();
  if (M == 1) {
    Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(rows, 1);
    return m_step(data, ones, Eigen::MatrixXd::Ones(1, 1), spec, nullptr, 1e-8);
  }
  auto rng = restart_rng(seed, restart);
  std::vector<int> labels;
  double confidence = 0.9;
  if (strategy == InitStrategy::kmeans_on_residuals && restart % 2 == 0) {
    ModelSpec single = spec;
    single.n_regimes = 1;
    const ModelParams base = m_step(data, Eigen::MatrixXd::Ones(rows, 1), Eigen::MatrixXd::Ones(1, 1), single, nullptr, 1e-8);
    const auto eqs = spec.equations();
    const Eigen::MatrixXd resid = kernels::equation_targets(data, eqs) -
                                  data.z * detail::equation_coefficients(base, 0).transpose();
    const auto Ne = resid.cols();
    Eigen::MatrixXd features(rows, Ne + 1);
    for (Eigen::Index e = 0; e < Ne; ++e) {
      const double sd = std::sqrt(std::max(resid.col(e).squaredNorm() / static_cast<double>(rows), 1e-300));
      features.col(e) = resid.col(e) / sd;
    }
    features.col(Ne) = features.leftCols(Ne).rowwise().norm();
    const double mean_norm = features.col(Ne).mean();
    const double sd_norm = std::sqrt(std::max((features.col(Ne).array() - mean_norm).square().mean(), 1e-300));
    features.col(Ne) = (features.col(Ne).array() - mean_norm) / sd_norm;
    labels = kmeans_labels(features, M, rng);
  } else {
    labels = sticky_labels(rows, M, rng);
    confidence = 0.7;
  }
  const Eigen::MatrixXd resp = soft_responsibilities(labels, M, confidence);
  return m_step(data, resp, pseudo_transition_counts(resp), spec, nullptr, 1e-8);
}

FitResult fit_em(const ObservationSeries& series, const ModelSpec& spec, const EmConfig& config) {
  spec.require_valid();
  config.require_valid();
  if (series.n_channels() != spec.n_channels)
    throw InputError("series has " + std::to_string(series.n_channels()) + " channels, spec expects " +
                     std::to_string(spec.n_channels));
  const Eigen::Index rows = series.length() - spec.lags;
  const Eigen::Index needed = min_rows_per_regime(spec) * spec.n_regimes;
  if (rows < needed)
    throw InputError("insufficient data: " + std::to_string(rows) + " effective rows, need " +
                     std::to_string(needed) + " for " + std::to_string(spec.n_regimes) +
                     " regimes at lag " + std::to_string(spec.lags));

  std::vector<std::string> pre_warnings;
  bool degenerate = false;
  for (auto e : spec.equations())
    if (near_constant(series.data.col(e))) {
      degenerate = true;
      pre_warnings.push_back("channel " + (static_cast<std::size_t>(e) < series.channels.size() ? series.channels[static_cast<std::size_t>(e)] : std::to_string(e)) +
                             " is constant; the fit is degenerate");
    }

  const int R = config.n_restarts;
  std::vector<std::optional<FitResult>> results(static_cast<std::size_t>(R));
  std::vector<std::string> errors(static_cast<std::size_t>(R));
#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < R; ++r) {
    ScopedWarningSink sink;
    try {
      const auto init = initial_params(series, spec, config.init, config.seed, r);
      auto fit = run_em(series, init, config);
      auto msgs = sink.take();
      fit.warnings.insert(fit.warnings.begin(), msgs.begin(), msgs.end());
      results[static_cast<std::size_t>(r)] = std::move(fit);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(r)] = e.what();
    }
  }

  int best = -1;
  for (int r = 0; r < R; ++r) {
    const auto& res = results[static_cast<std::size_t>(r)];
    if (!res) continue;
    if (best < 0 || res->probs.log_likelihood > results[static_cast<std::size_t>(best)]->probs.log_likelihood) best = r;
  }
  if (best < 0) throw NumericalError("every EM restart failed; first error: " + errors[0]);

  FitResult fit = std::move(*results[static_cast<std::size_t>(best)]);
  fit.trace.best_restart = best;
  bool any_converged = false;
  for (const auto& res : results)
    if (res && res->converged) any_converged = true;
  fit.converged = fit.trace.converged;
  std::vector<std::string> warnings = pre_warnings;
  for (int r = 0; r < R; ++r)
    if (!errors[static_cast<std::size_t>(r)].empty())
      warnings.push_back("restart " + std::to_string(r) + " failed: " + errors[static_cast<std::size_t>(r)]);
  for (const auto& w : fit.warnings) warnings.push_back("restart " + std::to_string(best) + ": " + w);
  if (!any_converged) warnings.push_back("no EM restart converged within " + std::to_string(config.max_iters) + " iterations");
  fit.warnings = std::move(warnings);
  fit.degenerate = degenerate;
  return fit;
}

nlohmann::json trace_to_json(const EmTrace& trace) {
  nlohmann::json j;
  j["log_likelihood"] = trace.log_likelihood;
  j["iterations"] = trace.iterations;
  j["converged"] = trace.converged;
  j["best_restart"] = trace.best_restart;
  return j;
}

}  // namespace msvar
