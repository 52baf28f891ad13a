#pragma once

#include <filesystem>
#include <string_view>

#include "json.hpp"

namespace msvar {

// Reads the TOML subset used for run configuration into a JSON tree:
// [table] / [table.sub] headers, key = value pairs, strings, integers,
// floats, booleans, single-line arrays and inline comments.
nlohmann::json parse_toml(std::string_view text);

// Dispatches on extension: .json is parsed as JSON, anything else as TOML.
nlohmann::json load_config(const std::filesystem::path& path);

}  // namespace msvar
