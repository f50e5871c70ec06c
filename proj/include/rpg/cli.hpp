#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace rpg {

inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Record of one command invocation, written next to its outputs. Replaying
/// the recorded arguments reproduces the outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::string output;
  /// Resolved generator/train configuration, when the command has one.
  nlohmann::json config;
  std::string version = kToolVersion;
};

nlohmann::json manifest_json(const RunManifest& m);
RunManifest parse_manifest(const nlohmann::json& j);
RunManifest load_manifest(const std::filesystem::path& path);

/// Runs one command; `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args);

}  // namespace rpg
