// Subcommand implementations behind the CLI front end. Each command takes a
// fully resolved key/value view so that a manifest can replay it.
#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace metarec::cli {

// Exit codes: 0 success, 1 runtime/IO failure, 2 usage/config error,
// 3 numerical divergence.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDiverged = 3;

struct Invocation {
  std::string subcommand;
  std::map<std::string, std::string> config;

  const std::string& at(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
};

int run_synthesize(const Invocation& inv);
int run_train(const Invocation& inv);
int run_embedgen(const Invocation& inv);
int run_serve(const Invocation& inv);
int run_eval(const Invocation& inv);
int run_sweep(const Invocation& inv);
int run_export(const Invocation& inv);
// Re-executes the invocation stored in a manifest, optionally redirecting
// outputs into another directory.
int run_replay(const std::filesystem::path& manifest_path,
               const std::string& out_dir);

int dispatch(const Invocation& inv);

}  // namespace metarec::cli
