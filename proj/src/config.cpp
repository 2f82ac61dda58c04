#include "metarec/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace metarec {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

KvConfig KvConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_text(buffer.str(), path.string());
}

KvConfig KvConfig::parse_text(const std::string& text,
                              const std::string& what) {
  KvConfig out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(what + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(what + ":" + std::to_string(line_no) + ": empty key");
    }
    out.entries_[key] = value;
  }
  return out;
}

void KvConfig::set(const std::string& key, std::string value) {
  entries_[key] = std::move(value);
}

bool KvConfig::has(const std::string& key) const {
  return entries_.contains(key);
}

std::string KvConfig::get_string(const std::string& key,
                                 const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

std::string KvConfig::require_string(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw ConfigError("missing config key '" + key + "'");
  }
  return it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& s = it->second;
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "': cannot parse number '" + s +
                      "'");
  }
  return v;
}

std::int64_t KvConfig::get_int(const std::string& key,
                               std::int64_t fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& s = it->second;
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("config key '" + key + "': cannot parse integer '" + s +
                      "'");
  }
  return v;
}

std::int64_t KvConfig::require_int(const std::string& key) const {
  require_string(key);
  return get_int(key, 0);
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" +
                    it->second + "'");
}

std::vector<std::size_t> KvConfig::get_size_list(
    const std::string& key, std::vector<std::size_t> fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<std::size_t> out;
  std::string s = it->second;
  if (trim(s).empty()) return out;
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || p != part.data() + part.size()) {
      throw ConfigError("config key '" + key + "': bad list entry '" + part +
                        "'");
    }
    out.push_back(v);
  }
  return out;
}

void KvConfig::check_known_keys(const std::vector<std::string>& known) const {
  for (const auto& [key, value] : entries_) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

const std::vector<std::string>& train_config_keys() {
  static const std::vector<std::string> keys = {
      "alpha",        "beta",        "inner_steps",
      "tasks_per_batch", "clip_norm", "warmup_steps",
      "total_steps",  "decay",       "dropout",
      "workers",      "seed",        "global_update_with_adapted_meta",
  };
  return keys;
}

TrainConfig train_config_from(const KvConfig& kv) {
  TrainConfig c;
  c.alpha = kv.get_double("alpha", c.alpha);
  c.beta = kv.get_double("beta", c.beta);
  c.inner_steps = static_cast<int>(kv.get_int("inner_steps", c.inner_steps));
  c.tasks_per_batch =
      static_cast<int>(kv.get_int("tasks_per_batch", c.tasks_per_batch));
  const std::string clip = kv.get_string("clip_norm", "1.0");
  if (clip == "none") {
    c.clip_norm.reset();
  } else {
    c.clip_norm = kv.get_double("clip_norm", 1.0);
  }
  c.warmup_steps =
      static_cast<int>(kv.get_int("warmup_steps", c.warmup_steps));
  c.total_steps = static_cast<int>(kv.require_int("total_steps"));
  c.decay = decay_from_string(kv.get_string("decay", "cosine"));
  c.dropout = kv.get_double("dropout", c.dropout);
  c.workers = static_cast<int>(kv.get_int("workers", c.workers));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
  c.global_update_with_adapted_meta =
      kv.get_bool("global_update_with_adapted_meta", true);
  c.validate();
  return c;
}

const std::vector<std::string>& synthetic_spec_keys() {
  static const std::vector<std::string> keys = {
      "num_tasks",   "samples_min", "samples_max",     "latent_scale",
      "meta_dim",    "other_dim",   "drift_rate",      "seed",
      "profile_coupling", "end_epoch", "train_days",
      "validation_days", "test_days",
  };
  return keys;
}

SyntheticSpec synthetic_spec_from(const KvConfig& kv) {
  SyntheticSpec s;
  s.num_tasks = static_cast<std::size_t>(
      kv.get_int("num_tasks", static_cast<std::int64_t>(s.num_tasks)));
  s.samples_min = static_cast<std::size_t>(
      kv.get_int("samples_min", static_cast<std::int64_t>(s.samples_min)));
  s.samples_max = static_cast<std::size_t>(
      kv.get_int("samples_max", static_cast<std::int64_t>(s.samples_max)));
  s.latent_scale = kv.get_double("latent_scale", s.latent_scale);
  s.meta_dim = static_cast<std::size_t>(
      kv.get_int("meta_dim", static_cast<std::int64_t>(s.meta_dim)));
  s.other_dim = static_cast<std::size_t>(
      kv.get_int("other_dim", static_cast<std::int64_t>(s.other_dim)));
  s.drift_rate = kv.get_double("drift_rate", s.drift_rate);
  s.seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
  s.profile_coupling = kv.get_double("profile_coupling", s.profile_coupling);
  s.end_epoch = kv.get_int("end_epoch", s.end_epoch);
  s.train_days = static_cast<int>(kv.get_int("train_days", s.train_days));
  s.validation_days =
      static_cast<int>(kv.get_int("validation_days", s.validation_days));
  s.test_days = static_cast<int>(kv.get_int("test_days", s.test_days));
  s.validate();
  return s;
}

const std::vector<std::string>& embedgen_config_keys() {
  static const std::vector<std::string> keys = {
      "k", "task_alpha", "window_days", "pooling", "version", "min_samples",
  };
  return keys;
}

EmbedGenConfig embedgen_config_from(const KvConfig& kv) {
  EmbedGenConfig c;
  c.k = static_cast<int>(kv.get_int("k", c.k));
  c.alpha = kv.get_double("task_alpha", c.alpha);
  c.window_days = static_cast<int>(kv.get_int("window_days", c.window_days));
  c.pooling = pooling_from_string(kv.get_string("pooling", "latest"));
  c.version = kv.get_string("version", c.version);
  c.min_samples = static_cast<std::size_t>(
      kv.get_int("min_samples", static_cast<std::int64_t>(c.min_samples)));
  c.validate();
  return c;
}

const std::vector<std::string>& model_arch_keys() {
  static const std::vector<std::string> keys = {
      "meta_block", "meta_hidden",         "embedding_dim", "global_hidden",
      "hidden",     "feed_meta_to_global", "support_fraction", "cap",
  };
  return keys;
}

ModelArchConfig model_arch_from(const KvConfig& kv) {
  ModelArchConfig m;
  m.meta_block = kv.get_string("meta_block", m.meta_block);
  m.meta_hidden = kv.get_size_list("meta_hidden", m.meta_hidden);
  m.embedding_dim = static_cast<std::size_t>(
      kv.get_int("embedding_dim", static_cast<std::int64_t>(m.embedding_dim)));
  m.global_hidden = kv.get_size_list("global_hidden", m.global_hidden);
  m.hidden = kv.get_size_list("hidden", m.hidden);
  m.feed_meta_to_global =
      kv.get_bool("feed_meta_to_global", m.feed_meta_to_global);
  m.support_fraction = kv.get_double("support_fraction", m.support_fraction);
  m.cap = kv.get_int("cap", m.cap);
  if (!(m.support_fraction > 0.0 && m.support_fraction < 1.0)) {
    throw ConfigError("support_fraction must be in (0,1)");
  }
  if (m.cap < 1) throw ConfigError("cap must be >= 1");
  return m;
}

}  // namespace metarec
