#pragma once

#include "anchoral/runner.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace anchoral {

/// Strict reader: unknown keys and wrong types raise ConfigError naming the
/// key; omitted keys keep their defaults. Relative dataset paths are resolved
/// against `base_dir` when it is non-empty.
ExperimentConfig config_from_json(const nlohmann::json &j, const std::filesystem::path &base_dir = {});
nlohmann::json config_to_json(const ExperimentConfig &cfg);

ExperimentConfig parse_config(const std::filesystem::path &path);
ExperimentConfig parse_config_string(const std::string &text);

/// Short method name used to group runs, e.g. `anchoral` or `anchoral/no-anchoring`.
std::string method_label(const ExperimentConfig &cfg);

}  // namespace anchoral
