// key = value configuration files plus typed accessors. Command-line flags
// override file entries, which override built-in defaults.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metarec/embedgen.hpp"
#include "metarec/synthetic.hpp"
#include "metarec/training.hpp"

namespace metarec {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KvConfig {
 public:
  KvConfig() = default;
  // Lines are `key = value`; '#' starts a comment; blank lines ignored.
  static KvConfig parse_file(const std::filesystem::path& path);
  static KvConfig parse_text(const std::string& text, const std::string& what);

  void set(const std::string& key, std::string value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::int64_t require_int(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::size_t> get_size_list(const std::string& key,
                                         std::vector<std::size_t> fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  // Rejects keys outside the allowed set (typo guard).
  void check_known_keys(const std::vector<std::string>& known) const;

 private:
  std::map<std::string, std::string> entries_;
};

// Assemblers used by the CLI; they read the documented keys and fall back
// to the struct defaults. `total_steps` is required for training configs.
TrainConfig train_config_from(const KvConfig& kv);
SyntheticSpec synthetic_spec_from(const KvConfig& kv);
EmbedGenConfig embedgen_config_from(const KvConfig& kv);

struct ModelArchConfig {
  std::string meta_block = "mlp";  // none | mlp | id-embedding
  std::vector<std::size_t> meta_hidden{8};
  std::size_t embedding_dim = 4;
  std::vector<std::size_t> global_hidden{16};
  std::vector<std::size_t> hidden{16};  // plain network (vanilla / maml)
  bool feed_meta_to_global = true;
  double support_fraction = 0.75;
  std::int64_t cap = 64;  // per-task sample cap
};
ModelArchConfig model_arch_from(const KvConfig& kv);

// Documented key sets (used for validation and --help text).
const std::vector<std::string>& train_config_keys();
const std::vector<std::string>& synthetic_spec_keys();
const std::vector<std::string>& embedgen_config_keys();
const std::vector<std::string>& model_arch_keys();

}  // namespace metarec
