#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "msvar/model.hpp"
#include "msvar/series.hpp"

namespace msvar {

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);
// Hash of the canonical CSV rendering of the series.
std::string data_fingerprint(const ObservationSeries& series);

struct ModelMetadata {
  std::string fit_method;  // "em", "gibbs" or "user"
  std::optional<double> log_likelihood;
  std::string data_fingerprint;
  std::vector<std::string> channels;
};

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

// Transition is written row-stochastic. On read, a document carrying
// "transition_convention": "column" is transposed into row form.
nlohmann::json model_to_json(const ModelParams& params, const ModelMetadata& metadata);
ModelParams model_from_json(const nlohmann::json& j, ModelMetadata* metadata = nullptr);

void save_model(const std::filesystem::path& path, const ModelParams& params, const ModelMetadata& metadata,
                const nlohmann::json& extra = nlohmann::json::object());
// Throws InputError when the document is malformed or the parameters break
// a model invariant.
ModelParams load_model(const std::filesystem::path& path, ModelMetadata* metadata = nullptr);

}  // namespace msvar
