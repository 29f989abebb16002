#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace calgate {

inline constexpr const char* kManifestSchema = "calgate.manifest/1";

/// Provenance record written next to every CLI output. `argv` is enough to
/// re-run the command; outputs of deterministic commands then match bit for bit.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  nlohmann::json config = nlohmann::json::object();
  std::optional<std::uint64_t> seed;
  std::string tool_version = CALGATE_VERSION;
  double wall_time_ms = 0.0;
};

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

/// `<output>.manifest.json`
std::filesystem::path manifest_path_for(const std::filesystem::path& primary_output);
void save_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

}  // namespace calgate
