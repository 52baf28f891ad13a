#include "msvar/model_io.hpp"

#include <openssl/sha.h>

#include <cmath>

#include "msvar/csv.hpp"
#include "msvar/error.hpp"

namespace msvar {
namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw InputError(what + ": expected " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw InputError(what + ": row " + std::to_string(r + 1) + " should have " + std::to_string(cols) + " entries");
    for (Eigen::Index c = 0; c < cols; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw InputError(what + ": non-numeric entry at row " + std::to_string(r + 1));
      m(r, c) = v.get<double>();
    }
  }
  return m;
}

const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw InputError(std::string("model document is missing '") + key + "'");
  return j.at(key);
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char b : digest) {
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

std::string data_fingerprint(const ObservationSeries& series) { return sha256_hex(series_to_csv(series)); }

nlohmann::json spec_to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["n_channels"] = spec.n_channels;
  j["n_regimes"] = spec.n_regimes;
  j["lags"] = spec.lags;
  j["switch_intercept"] = spec.switch_intercept;
  j["switch_coeffs"] = spec.switch_coeffs;
  j["switch_cov"] = spec.switch_cov;
  j["diagonal_var"] = spec.diagonal_var;
  if (spec.regression)
    j["regression"] = {{"target", spec.regression->target},
                       {"regressors", spec.regression->regressors},
                       {"intercept", spec.regression->intercept}};
  else
    j["regression"] = nullptr;
  return j;
}

ModelSpec spec_from_json(const nlohmann::json& j) {
  try {
    ModelSpec spec;
    spec.n_channels = j.at("n_channels").get<Eigen::Index>();
    spec.n_regimes = j.at("n_regimes").get<int>();
    spec.lags = j.at("lags").get<int>();
    spec.switch_intercept = j.value("switch_intercept", true);
    spec.switch_coeffs = j.value("switch_coeffs", true);
    spec.switch_cov = j.value("switch_cov", true);
    spec.diagonal_var = j.value("diagonal_var", false);
    if (j.contains("regression") && !j.at("regression").is_null()) {
      const auto& r = j.at("regression");
      RegressionMode mode;
      mode.target = r.at("target").get<Eigen::Index>();
      mode.regressors = r.at("regressors").get<std::vector<Eigen::Index>>();
      mode.intercept = r.value("intercept", false);
      spec.regression = mode;
    }
    spec.require_valid();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad model spec: ") + e.what());
  }
}

nlohmann::json model_to_json(const ModelParams& params, const ModelMetadata& metadata) {
  nlohmann::json j;
  j["spec"] = spec_to_json(params.spec);
  j["intercepts"] = matrix_json(params.intercepts);
  nlohmann::json coeffs = nlohmann::json::array();
  for (const auto& regime : params.coeffs) {
    nlohmann::json lags = nlohmann::json::array();
    for (const auto& a : regime) lags.push_back(matrix_json(a));
    coeffs.push_back(lags);
  }
  j["coeffs"] = coeffs;
  nlohmann::json covs = nlohmann::json::array();
  for (const auto& s : params.covariances) covs.push_back(matrix_json(s));
  j["covariances"] = covs;
  j["transition"] = matrix_json(params.transition);
  j["transition_convention"] = "row";
  j["initial_dist"] = std::vector<double>(params.initial_dist.data(), params.initial_dist.data() + params.initial_dist.size());
  nlohmann::json meta;
  meta["fit_method"] = metadata.fit_method;
  if (metadata.log_likelihood && std::isfinite(*metadata.log_likelihood))
    meta["log_likelihood"] = *metadata.log_likelihood;
  else
    meta["log_likelihood"] = nullptr;
  meta["data_fingerprint"] = metadata.data_fingerprint;
  meta["channels"] = metadata.channels;
  j["metadata"] = meta;
  return j;
}

ModelParams model_from_json(const nlohmann::json& j, ModelMetadata* metadata) {
  if (!j.is_object()) throw InputError("model document must be a JSON object");
  const ModelSpec spec = spec_from_json(field(j, "spec"));
  const int M = spec.n_regimes;
  const Eigen::Index N = spec.n_channels;
  ModelParams p = ModelParams::zeros(spec);
  p.intercepts = matrix_from(field(j, "intercepts"), M, N, "intercepts");
  const auto& coeffs = field(j, "coeffs");
  if (!coeffs.is_array() || static_cast<int>(coeffs.size()) != M) throw InputError("coeffs: expected one entry per regime");
  for (int m = 0; m < M; ++m) {
    const auto& lags = coeffs[static_cast<std::size_t>(m)];
    if (!lags.is_array() || static_cast<int>(lags.size()) != spec.lags)
      throw InputError("coeffs: regime " + std::to_string(m + 1) + " should list " + std::to_string(spec.lags) + " lag matrices");
    for (int i = 0; i < spec.lags; ++i)
      p.coeffs[static_cast<std::size_t>(m)][static_cast<std::size_t>(i)] =
          matrix_from(lags[static_cast<std::size_t>(i)], N, N,
                      "coeffs[regime " + std::to_string(m + 1) + "][lag " + std::to_string(i + 1) + "]");
  }
  const auto& covs = field(j, "covariances");
  if (!covs.is_array() || static_cast<int>(covs.size()) != M) throw InputError("covariances: expected one per regime");
  for (int m = 0; m < M; ++m)
    p.covariances[static_cast<std::size_t>(m)] =
        matrix_from(covs[static_cast<std::size_t>(m)], N, N, "covariance of regime " + std::to_string(m + 1));
  p.transition = matrix_from(field(j, "transition"), M, M, "transition");
  const std::string convention = j.value("transition_convention", std::string("row"));
  if (convention == "column")
    p.transition = from_column_stochastic(p.transition);
  else if (convention != "row")
    throw InputError("transition_convention must be 'row' or 'column'");
  if (j.contains("initial_dist")) {
    const auto& pi = j.at("initial_dist");
    if (!pi.is_array() || static_cast<int>(pi.size()) != M) throw InputError("initial_dist: expected " + std::to_string(M) + " entries");
    for (int m = 0; m < M; ++m) p.initial_dist(m) = pi[static_cast<std::size_t>(m)].get<double>();
  } else {
    p.initial_dist = stationary_distribution(p.transition);
  }
  if (metadata) {
    *metadata = {};
    if (j.contains("metadata") && j.at("metadata").is_object()) {
      const auto& meta = j.at("metadata");
      metadata->fit_method = meta.value("fit_method", std::string());
      if (meta.contains("log_likelihood") && meta.at("log_likelihood").is_number())
        metadata->log_likelihood = meta.at("log_likelihood").get<double>();
      metadata->data_fingerprint = meta.value("data_fingerprint", std::string());
      if (meta.contains("channels")) metadata->channels = meta.at("channels").get<std::vector<std::string>>();
    }
  }
  const auto issues = validate(p);
  if (!issues.empty()) {
    std::string msg = "invalid model parameters:";
    for (const auto& i : issues) msg += "\n  " + i;
    throw InputError(msg);
  }
  return p;
}

void save_model(const std::filesystem::path& path, const ModelParams& params, const ModelMetadata& metadata,
                const nlohmann::json& extra) {
  nlohmann::json j = model_to_json(params, metadata);
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  write_text_file(path, j.dump(2) + "\n");
}

ModelParams load_model(const std::filesystem::path& path, ModelMetadata* metadata) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("cannot parse model file " + path.string() + ": " + e.what());
  }
  return model_from_json(j, metadata);
}

}  // namespace msvar
