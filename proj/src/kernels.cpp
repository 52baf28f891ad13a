#include "msvar/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace msvar::kernels {
namespace {

Eigen::Index chunk_count(Eigen::Index rows) { return (rows + kChunkRows - 1) / kChunkRows; }

void density_rows(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& z, Eigen::Index begin,
                  Eigen::Index count, const std::vector<RegimeGaussian>& regimes,
                  Eigen::MatrixXd& out) {
  for (std::size_t m = 0; m < regimes.size(); ++m) {
    const auto& g = regimes[m];
    Eigen::MatrixXd resid =
        (targets.middleRows(begin, count) - z.middleRows(begin, count) * g.coef.transpose())
            .transpose();
    g.chol_lower.triangularView<Eigen::Lower>().solveInPlace(resid);
    out.block(begin, static_cast<Eigen::Index>(m), count, 1) =
        (g.log_norm - 0.5 * resid.colwise().squaredNorm().array()).transpose();
  }
}

}  // namespace

Eigen::MatrixXd equation_targets(const LaggedData& data, const std::vector<Eigen::Index>& equations) {
  Eigen::MatrixXd out(data.rows(), static_cast<Eigen::Index>(equations.size()));
  for (std::size_t e = 0; e < equations.size(); ++e)
    out.col(static_cast<Eigen::Index>(e)) = data.y.col(equations[e]);
  return out;
}

void set_thread_count(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

int thread_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

Eigen::MatrixXd log_density_table(const LaggedData& data, const std::vector<RegimeGaussian>& regimes,
                                  const std::vector<Eigen::Index>& equations) {
  const Eigen::MatrixXd targets = equation_targets(data, equations);
  Eigen::MatrixXd out(data.rows(), static_cast<Eigen::Index>(regimes.size()));
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (std::size_t m = 0; m < regimes.size(); ++m) {
      const auto& g = regimes[m];
      Eigen::VectorXd resid = targets.row(r).transpose() - g.coef * data.z.row(r).transpose();
      g.chol_lower.triangularView<Eigen::Lower>().solveInPlace(resid);
      out(r, static_cast<Eigen::Index>(m)) = g.log_norm - 0.5 * resid.squaredNorm();
    }
  }
  return out;
}

Moments weighted_moments(const LaggedData& data, const Eigen::VectorXd& weights) {
  const Eigen::Index K = data.z.cols();
  Moments mo{Eigen::MatrixXd::Zero(K, K), Eigen::MatrixXd::Zero(K, data.y.cols()), 0.0};
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    const double w = weights(r);
    if (w == 0.0) continue;
    mo.zz.noalias() += w * data.z.row(r).transpose() * data.z.row(r);
    mo.zy.noalias() += w * data.z.row(r).transpose() * data.y.row(r);
    mo.weight += w;
  }
  return mo;
}

Eigen::MatrixXd residual_scatter(const LaggedData& data, const Eigen::MatrixXd& coef,
                                 const std::vector<Eigen::Index>& equations,
                                 const Eigen::VectorXd& weights) {
  const auto Ne = static_cast<Eigen::Index>(equations.size());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(Ne, Ne);
  Eigen::VectorXd r(Ne);
  for (Eigen::Index t = 0; t < data.rows(); ++t) {
    const double w = weights(t);
    if (w == 0.0) continue;
    for (Eigen::Index e = 0; e < Ne; ++e)
      r(e) = data.y(t, equations[static_cast<std::size_t>(e)]) - coef.row(e).dot(data.z.row(t));
    s.noalias() += w * r * r.transpose();
  }
  return s;
}

}  // namespace serial

namespace parallel {

Eigen::MatrixXd log_density_table(const LaggedData& data, const std::vector<RegimeGaussian>& regimes,
                                  const std::vector<Eigen::Index>& equations) {
  const Eigen::MatrixXd targets = equation_targets(data, equations);
  const Eigen::Index rows = data.rows();
  Eigen::MatrixXd out(rows, static_cast<Eigen::Index>(regimes.size()));
  const Eigen::Index chunks = chunk_count(rows);
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index begin = c * kChunkRows;
    density_rows(targets, data.z, begin, std::min(kChunkRows, rows - begin), regimes, out);
  }
  return out;
}

Moments weighted_moments(const LaggedData& data, const Eigen::VectorXd& weights) {
  const Eigen::Index K = data.z.cols();
  const Eigen::Index N = data.y.cols();
  const Eigen::Index rows = data.rows();
  const Eigen::Index chunks = chunk_count(rows);
  std::vector<Moments> partial(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index begin = c * kChunkRows;
    const Eigen::Index count = std::min(kChunkRows, rows - begin);
    const auto w = weights.segment(begin, count);
    const auto zc = data.z.middleRows(begin, count);
    Eigen::MatrixXd wz = zc.array().colwise() * w.array();
    auto& p = partial[static_cast<std::size_t>(c)];
    p.zz.noalias() = wz.transpose() * zc;
    p.zy.noalias() = wz.transpose() * data.y.middleRows(begin, count);
    p.weight = w.sum();
  }
  Moments mo{Eigen::MatrixXd::Zero(K, K), Eigen::MatrixXd::Zero(K, N), 0.0};
  for (const auto& p : partial) {
    mo.zz += p.zz;
    mo.zy += p.zy;
    mo.weight += p.weight;
  }
  return mo;
}

Eigen::MatrixXd residual_scatter(const LaggedData& data, const Eigen::MatrixXd& coef,
                                 const std::vector<Eigen::Index>& equations,
                                 const Eigen::VectorXd& weights) {
  const Eigen::MatrixXd targets = equation_targets(data, equations);
  const auto Ne = static_cast<Eigen::Index>(equations.size());
  const Eigen::Index rows = data.rows();
  const Eigen::Index chunks = chunk_count(rows);
  std::vector<Eigen::MatrixXd> partial(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index begin = c * kChunkRows;
    const Eigen::Index count = std::min(kChunkRows, rows - begin);
    Eigen::MatrixXd resid =
        targets.middleRows(begin, count) - data.z.middleRows(begin, count) * coef.transpose();
    Eigen::MatrixXd wr = resid.array().colwise() * weights.segment(begin, count).array();
    partial[static_cast<std::size_t>(c)].noalias() = wr.transpose() * resid;
  }
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(Ne, Ne);
  for (const auto& p : partial) s += p;
  return s;
}

}  // namespace parallel
}  // namespace msvar::kernels
