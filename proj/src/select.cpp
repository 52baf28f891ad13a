#include "msvar/select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "msvar/csv.hpp"
#include "msvar/diagnostics.hpp"
#include "msvar/error.hpp"

namespace msvar {

Criteria criteria(double log_lik, Eigen::Index k, Eigen::Index t_eff) {
  if (k < 1) throw ConfigError("parameter count must be >= 1");
  if (static_cast<double>(t_eff) <= std::numbers::e)
    throw ConfigError("effective sample size " + std::to_string(t_eff) + " is too small for HQC (needs T > e)");
  const double kk = static_cast<double>(k);
  const double lt = std::log(static_cast<double>(t_eff));
  return {2.0 * kk - 2.0 * log_lik, kk * lt - 2.0 * log_lik, 2.0 * kk * std::log(lt) - 2.0 * log_lik};
}

Criterion parse_criterion(const std::string& name) {
  if (name == "aic") return Criterion::aic;
  if (name == "bic") return Criterion::bic;
  if (name == "hqc") return Criterion::hqc;
  if (name == "loglik") return Criterion::loglik;
  throw ConfigError("unknown criterion '" + name + "' (expected aic, bic, hqc or loglik)");
}

std::string to_string(Criterion c) {
  switch (c) {
    case Criterion::aic: return "aic";
    case Criterion::bic: return "bic";
    case Criterion::hqc: return "hqc";
    case Criterion::loglik: return "loglik";
  }
  return "?";
}

std::string to_string(CellStatus s) {
  switch (s) {
    case CellStatus::ok: return "ok";
    case CellStatus::nonconverged: return "nonconverged";
    case CellStatus::degenerate: return "degenerate";
    case CellStatus::failed: return "failed";
  }
  return "?";
}

double GridCell::score(Criterion c) const {
  switch (c) {
    case Criterion::aic: return scores.aic;
    case Criterion::bic: return scores.bic;
    case Criterion::hqc: return scores.hqc;
    case Criterion::loglik: return -log_likelihood;
  }
  return 0.0;
}

const GridCell& SelectionGrid::at(int lags, int regimes) const {
  for (const auto& c : cells)
    if (c.lags == lags && c.regimes == regimes) return c;
  throw IndexError("no grid cell for p=" + std::to_string(lags) + ", M=" + std::to_string(regimes));
}

int SelectionGrid::best(Criterion c) const {
  int best = -1;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].status == CellStatus::failed) continue;
    if (best < 0 || cells[i].score(c) < cells[static_cast<std::size_t>(best)].score(c)) best = static_cast<int>(i);
  }
  return best;
}

std::vector<const GridCell*> SelectionGrid::failed() const {
  std::vector<const GridCell*> out;
  for (const auto& c : cells)
    if (c.status == CellStatus::failed) out.push_back(&c);
  return out;
}

std::vector<int> parse_range(const std::string& text) {
  std::set<int> values;
  auto to_int = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(s, &used);
      if (used != s.size()) throw ConfigError("");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("bad range '" + text + "'");
    }
  };
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string part = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      values.insert(to_int(part));
    } else {
      const int lo = to_int(part.substr(0, dots));
      const int hi = to_int(part.substr(dots + 2));
      if (hi < lo) throw ConfigError("bad range '" + text + "': upper bound below lower bound");
      for (int v = lo; v <= hi; ++v) values.insert(v);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (values.empty()) throw ConfigError("empty range '" + text + "'");
  return {values.begin(), values.end()};
}

namespace {

GridCell fit_cell(const ObservationSeries& trimmed, int lags, int regimes, const ModelSpec& spec_template,
                  const EmConfig& config, Eigen::Index t_eff) {
  GridCell cell;
  cell.lags = lags;
  cell.regimes = regimes;
  ModelSpec spec = spec_template;
  spec.lags = lags;
  spec.n_regimes = regimes;
  try {
    spec.require_valid();
    cell.k = spec.parameter_count();
    auto fit = fit_em(trimmed, spec, config);
    cell.log_likelihood = fit.probs.log_likelihood;
    cell.scores = criteria(cell.log_likelihood, cell.k, t_eff);
    cell.status = fit.degenerate ? CellStatus::degenerate
                                 : (fit.converged ? CellStatus::ok : CellStatus::nonconverged);
    for (const auto& w : fit.warnings) cell.message += (cell.message.empty() ? "" : "; ") + w;
    cell.params = std::move(fit.params);
  } catch (const std::exception& e) {
    cell.status = CellStatus::failed;
    cell.message = e.what();
  }
  return cell;
}

}  // namespace

SelectionGrid grid_search(const ObservationSeries& series, const std::vector<int>& lag_values,
                          const std::vector<int>& regime_values, const ModelSpec& spec_template,
                          const EmConfig& config) {
  if (lag_values.empty() || regime_values.empty()) throw ConfigError("lag and regime ranges must be non-empty");
  for (int p : lag_values)
    if (p < 0) throw ConfigError("lags must be >= 0");
  for (int m : regime_values)
    if (m < 1) throw ConfigError("regimes must be >= 1");
  config.require_valid();
  const int pmax = *std::max_element(lag_values.begin(), lag_values.end());
  if (series.length() <= pmax)
    throw InputError("series of " + std::to_string(series.length()) + " rows is too short for lag " +
                     std::to_string(pmax));

  SelectionGrid grid;
  grid.lag_values = lag_values;
  grid.regime_values = regime_values;
  grid.t_eff = series.length() - pmax;
  const auto nl = static_cast<int>(lag_values.size());
  const auto nm = static_cast<int>(regime_values.size());
  grid.cells.resize(static_cast<std::size_t>(nl * nm));

  std::vector<ObservationSeries> trimmed;
  for (int p : lag_values) trimmed.push_back(series.slice(pmax - p, series.length() - (pmax - p)));

#pragma omp parallel for schedule(dynamic)
  for (int idx = 0; idx < nl * nm; ++idx) {
    const int i = idx / nm;
    const int j = idx % nm;
    ScopedWarningSink sink;
    auto cell = fit_cell(trimmed[static_cast<std::size_t>(i)], lag_values[static_cast<std::size_t>(i)],
                         regime_values[static_cast<std::size_t>(j)], spec_template, config, grid.t_eff);
    grid.cells[static_cast<std::size_t>(idx)] = std::move(cell);
  }

  for (int i = 0; i < nl; ++i)
    for (int j = 0; j + 1 < nm; ++j) {
      const auto& a = grid.cells[static_cast<std::size_t>(i * nm + j)];
      const auto& b = grid.cells[static_cast<std::size_t>(i * nm + j + 1)];
      if (a.status == CellStatus::failed || b.status == CellStatus::failed) continue;
      if (b.log_likelihood < a.log_likelihood - 1e-6)
        grid.warnings.push_back("possible local optimum: p=" + std::to_string(a.lags) + ", M=" +
                                std::to_string(b.regimes) + " likelihood " + format_short(b.log_likelihood) +
                                " is below M=" + std::to_string(a.regimes) + " (" + format_short(a.log_likelihood) + ")");
    }
  for (const auto* c : grid.failed())
    grid.warnings.push_back("cell p=" + std::to_string(c->lags) + ", M=" + std::to_string(c->regimes) +
                            " failed: " + c->message);
  return grid;
}

SelectionGrid lag_curve(const ObservationSeries& series, const std::vector<int>& lag_values, int regimes,
                        const ModelSpec& spec_template, const EmConfig& config) {
  return grid_search(series, lag_values, {regimes}, spec_template, config);
}

namespace {

std::string cell_fields(const GridCell& c) {
  if (c.status == CellStatus::failed) return ",,,," + std::to_string(c.k) + "," + to_string(c.status);
  return format_exact(c.log_likelihood) + "," + format_exact(c.scores.aic) + "," + format_exact(c.scores.bic) + "," +
         format_exact(c.scores.hqc) + "," + std::to_string(c.k) + "," + to_string(c.status);
}

}  // namespace

std::string grid_to_csv(const SelectionGrid& grid) {
  std::string out = "p,M,loglik,aic,bic,hqc,k,status\n";
  for (const auto& c : grid.cells)
    out += std::to_string(c.lags) + "," + std::to_string(c.regimes) + "," + cell_fields(c) + "\n";
  return out;
}

std::string lag_curve_to_csv(const SelectionGrid& grid) {
  std::string out = "p,loglik,aic,bic,hqc,k,status\n";
  for (const auto& c : grid.cells) out += std::to_string(c.lags) + "," + cell_fields(c) + "\n";
  return out;
}

std::string loglik_table_csv(const SelectionGrid& grid) {
  std::string out = "M";
  for (int p : grid.lag_values) out += ",p" + std::to_string(p);
  out += "\n";
  for (int m : grid.regime_values) {
    out += std::to_string(m);
    for (int p : grid.lag_values) {
      const auto& c = grid.at(p, m);
      out += "," + (c.status == CellStatus::failed ? std::string() : format_exact(c.log_likelihood));
    }
    out += "\n";
  }
  return out;
}

nlohmann::json best_cell_json(const SelectionGrid& grid, Criterion c) {
  nlohmann::json j;
  j["criterion"] = to_string(c);
  j["t_eff"] = grid.t_eff;
  j["lag_values"] = grid.lag_values;
  j["regime_values"] = grid.regime_values;
  const int b = grid.best(c);
  if (b < 0) {
    j["best"] = nullptr;
  } else {
    const auto& cell = grid.cells[static_cast<std::size_t>(b)];
    j["best"] = {{"p", cell.lags},
                 {"M", cell.regimes},
                 {"loglik", cell.log_likelihood},
                 {"aic", cell.scores.aic},
                 {"bic", cell.scores.bic},
                 {"hqc", cell.scores.hqc},
                 {"k", cell.k},
                 {"status", to_string(cell.status)}};
  }
  nlohmann::json failed = nlohmann::json::array();
  for (const auto* f : grid.failed()) failed.push_back({{"p", f->lags}, {"M", f->regimes}, {"error", f->message}});
  j["failed_cells"] = failed;
  j["warnings"] = grid.warnings;
  return j;
}

}  // namespace msvar
