#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace lrlab {

// Written next to every command's outputs; holds everything needed to
// byte-reproduce them: the resolved config, seeds, base-model hash, and the
// artifact list. Deliberately no timestamps or host details.
struct RunManifest {
  std::string tool_version;
  std::string command;
  nlohmann::ordered_json config_snapshot;
  std::vector<std::uint64_t> seeds;
  std::string base_model_hash;  // hex, empty when no model is involved
  std::vector<std::string> artifacts;
};

nlohmann::ordered_json manifest_to_json(const RunManifest& m);
void write_manifest(const RunManifest& m, const std::string& path);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);

std::string hex64(std::uint64_t h);

}  // namespace lrlab
