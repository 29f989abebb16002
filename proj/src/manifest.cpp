#include "calgate/manifest.hpp"

#include "calgate/datamodel.hpp"
#include "calgate/error.hpp"

namespace calgate {

using json = nlohmann::json;

json manifest_to_json(const RunManifest& m) {
  json j;
  j["schema"] = kManifestSchema;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["config"] = m.config;
  j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
  j["tool_version"] = m.tool_version;
  j["wall_time_ms"] = m.wall_time_ms;
  return j;
}

RunManifest manifest_from_json(const json& j) {
  try {
    if (j.at("schema").get<std::string>() != kManifestSchema) {
      throw ValidationError("unsupported manifest schema '" + j.at("schema").get<std::string>() + "'");
    }
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.config = j.value("config", json::object());
    if (j.contains("seed") && !j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
    m.tool_version = j.value("tool_version", std::string{});
    m.wall_time_ms = j.value("wall_time_ms", 0.0);
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
}

std::filesystem::path manifest_path_for(const std::filesystem::path& primary_output) {
  auto p = primary_output;
  p += ".manifest.json";
  return p;
}

void save_manifest(const RunManifest& m, const std::filesystem::path& path) {
  write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

RunManifest load_manifest(const std::filesystem::path& path) {
  const auto text = read_file(path);
  try {
    return manifest_from_json(json::parse(text));
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("manifest: invalid JSON: ") + e.what());
  }
}

}  // namespace calgate
