#include "metarec/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace metarec {

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec);
  return buf;
}

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["tool_version"] = manifest.tool_version;
  j["subcommand"] = manifest.subcommand;
  j["seed"] = manifest.seed;
  j["config"] = manifest.config;
  j["inputs"] = manifest.inputs;
  j["outputs"] = manifest.outputs;
  j["started_at"] = manifest.started_at;
  j["finished_at"] = manifest.finished_at;
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write manifest " + tmp.string());
    }
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open manifest " + path.string());
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("manifest " + path.string() + ": " + e.what());
  }
  RunManifest m;
  m.tool_version = j.at("tool_version").get<std::string>();
  m.subcommand = j.at("subcommand").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config = j.at("config").get<std::map<std::string, std::string>>();
  m.inputs = j.at("inputs").get<std::vector<std::string>>();
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  return m;
}

}  // namespace metarec
