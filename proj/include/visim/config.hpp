#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace visim {

/// Parse a config file into JSON by extension: .json via nlohmann, .toml via
/// a small TOML-subset reader ([section] and [a.b] tables, dotted keys,
/// strings, integers, floats, booleans, flat arrays, # comments).
nlohmann::json load_config_file(const std::filesystem::path& path);

nlohmann::json parse_toml_subset(const std::string& text, const std::string& origin);

/// Deep merge: values in `overrides` win; nested objects merge recursively.
nlohmann::json merge_config(nlohmann::json base, const nlohmann::json& overrides);

}  // namespace visim
