#pragma once

#include "rpg/model.hpp"
#include "rpg/training.hpp"

#include <json.hpp>

#include <filesystem>

namespace rpg {

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct RunConfig {
  GeneratorConfig generator;
  TrainConfig train;
};

/// Reads {"generator": {...}, "train": {...}}. Missing fields keep their
/// defaults; unknown fields are rejected.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const nlohmann::json& j);
nlohmann::json run_config_json(const RunConfig& c);

}  // namespace rpg
