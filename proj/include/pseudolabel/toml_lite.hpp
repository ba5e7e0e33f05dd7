#pragma once

#include <filesystem>
#include <string_view>

#include <nlohmann/json.hpp>

namespace pseudolabel {

/// Parses the TOML subset used by scene and pipeline configs into a JSON tree:
/// `[table]`, `[[array.of.tables]]`, `key = value` with integers, floats,
/// booleans, basic strings and (possibly multi-line) arrays of those. Dotted
/// table names nest. Throws FormatError with the offending line number.
nlohmann::json parse_toml(std::string_view text);
nlohmann::json load_toml(const std::filesystem::path& path);

}  // namespace pseudolabel
