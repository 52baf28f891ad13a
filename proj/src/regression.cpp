#include "msvar/detail/regression.hpp"

#include <map>

#include "msvar/diagnostics.hpp"

namespace msvar::detail {

CoefficientLayout CoefficientLayout::build(const ModelSpec& spec) {
  CoefficientLayout layout;
  const auto mask = spec.coefficient_mask();
  const auto eqs = spec.equations();
  const int M = spec.n_regimes;
  layout.regimes.resize(static_cast<std::size_t>(M));
  std::map<std::pair<Eigen::Index, Eigen::Index>, Eigen::Index> shared;
  for (int m = 0; m < M; ++m) {
    for (Eigen::Index a = 0; a < spec.regressor_count(); ++a) {
      for (std::size_t e = 0; e < eqs.size(); ++e) {
        if (!mask(eqs[e], a)) continue;
        const auto key = std::make_pair(static_cast<Eigen::Index>(e), a);
        Eigen::Index slot;
        if (spec.column_switches(a) || M == 1) {
          slot = layout.size++;
        } else if (auto it = shared.find(key); it != shared.end()) {
          slot = it->second;
        } else {
          slot = layout.size++;
          shared.emplace(key, slot);
        }
        layout.regimes[static_cast<std::size_t>(m)].push_back({static_cast<Eigen::Index>(e), a, slot});
      }
    }
  }
  return layout;
}

NormalEquations assemble_normal_equations(const ModelSpec& spec, const CoefficientLayout& layout,
                                          const std::vector<kernels::Moments>& moments,
                                          const std::vector<Eigen::MatrixXd>& precisions) {
  const auto eqs = spec.equations();
  NormalEquations ne{Eigen::MatrixXd::Zero(layout.size, layout.size),
                     Eigen::VectorXd::Zero(layout.size)};
  for (std::size_t m = 0; m < layout.regimes.size(); ++m) {
    const auto& entries = layout.regimes[m];
    const auto& G = moments[m].zz;
    const auto& H = moments[m].zy;
    const auto& L = precisions[m];
    for (const auto& p : entries) {
      double r = 0.0;
      for (std::size_t f = 0; f < eqs.size(); ++f)
        r += L(p.equation, static_cast<Eigen::Index>(f)) * H(p.column, eqs[f]);
      ne.rhs(p.slot) += r;
      for (const auto& q : entries) ne.lhs(p.slot, q.slot) += G(p.column, q.column) * L(p.equation, q.equation);
    }
  }
  return ne;
}

void scatter_coefficients(const CoefficientLayout& layout, const Eigen::VectorXd& theta, ModelParams& params) {
  const auto eqs = params.spec.equations();
  for (std::size_t m = 0; m < layout.regimes.size(); ++m) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(params.n_channels(), params.spec.regressor_count());
    for (const auto& p : layout.regimes[m]) b(eqs[static_cast<std::size_t>(p.equation)], p.column) = theta(p.slot);
    params.set_design(static_cast<int>(m), b);
  }
}

bool ols_is_exact(const ModelSpec& spec) {
  if (spec.regression || spec.diagonal_var) return false;
  if (spec.n_regimes == 1) return true;
  if (spec.lags == 0) {
    // Only the intercept column exists.
    return spec.switch_intercept || !spec.switch_cov;
  }
  if (spec.switch_intercept && spec.switch_coeffs) return true;
  return !spec.switch_intercept && !spec.switch_coeffs && !spec.switch_cov;
}

Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& lhs, const Eigen::MatrixXd& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(lhs);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd x = llt.solve(rhs);
    if (x.allFinite()) return x;
  }
  const double scale = std::max(lhs.diagonal().cwiseAbs().maxCoeff(), 1.0);
  Eigen::MatrixXd reg = lhs;
  reg.diagonal().array() += 1e-10 * scale;
  warn("normal equations are singular; solved with a ridge");
  llt.compute(reg);
  if (llt.info() == Eigen::Success) return llt.solve(rhs);
  return reg.completeOrthogonalDecomposition().solve(rhs);
}

Eigen::MatrixXd equation_block(const ModelParams& params, int m) {
  const auto eqs = params.spec.equations();
  const auto Ne = static_cast<Eigen::Index>(eqs.size());
  Eigen::MatrixXd s(Ne, Ne);
  for (Eigen::Index e = 0; e < Ne; ++e)
    for (Eigen::Index f = 0; f < Ne; ++f)
      s(e, f) = params.covariances[static_cast<std::size_t>(m)](eqs[static_cast<std::size_t>(e)], eqs[static_cast<std::size_t>(f)]);
  return s;
}

Eigen::MatrixXd embed_covariance(const ModelSpec& spec, const Eigen::MatrixXd& block) {
  const auto eqs = spec.equations();
  Eigen::MatrixXd full = Eigen::MatrixXd::Identity(spec.n_channels, spec.n_channels);
  for (std::size_t e = 0; e < eqs.size(); ++e)
    for (std::size_t f = 0; f < eqs.size(); ++f)
      full(eqs[e], eqs[f]) = block(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(f));
  return full;
}

Eigen::MatrixXd equation_coefficients(const ModelParams& params, int m) {
  const auto eqs = params.spec.equations();
  const Eigen::MatrixXd b = params.design(m);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(eqs.size()), b.cols());
  for (std::size_t e = 0; e < eqs.size(); ++e) out.row(static_cast<Eigen::Index>(e)) = b.row(eqs[e]);
  return out;
}

}  // namespace msvar::detail
