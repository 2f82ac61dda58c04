// Run manifests: the resolved configuration, inputs, outputs and seed of
// every CLI invocation, written atomically next to the outputs. Re-running
// a subcommand from its manifest reproduces the outputs (timestamps and
// wall-clock fields aside).
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace metarec {

inline const char* kToolVersion = "0.1.0";

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string subcommand;
  std::map<std::string, std::string> config;  // fully resolved
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string started_at;   // ISO 8601 UTC
  std::string finished_at;
};

std::string now_iso8601();

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& path);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace metarec
