// Versioned embedding snapshots and model checkpoints.
//
// Snapshot layout (all integers little-endian):
//   magic "LMES" | u16 format version | u16 date len + date bytes |
//   u32 dim | u64 count |
//   per record (sorted by key): u32 key len | key bytes | u64 payload offset |
//   payload: count * dim float32 |
//   u64 FNV-1a checksum of all preceding bytes
//
// Files with identical logical content are byte-identical (canonical sort
// and fixed encoding), so content hashes compare snapshots. Writes go to a
// temp file and are renamed into place.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "metarec/bundle.hpp"
#include "metarec/embedgen.hpp"

namespace metarec {

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EmbeddingSnapshot {
  std::string version;  // YYYY-MM-DD
  std::size_t dim = 0;
  // sorted by task_key, unique
  std::vector<std::pair<std::string, std::vector<float>>> records;

  std::size_t count() const { return records.size(); }
  void validate() const;
};

// Builds a canonical snapshot (sorted, 32-bit values) from generated
// embeddings; duplicate keys and dimension mismatches are rejected.
EmbeddingSnapshot make_snapshot(const std::vector<MetaEmbedding>& embeddings,
                                const std::string& version, std::size_t dim);

void write_snapshot(const EmbeddingSnapshot& snapshot,
                    const std::filesystem::path& path);
EmbeddingSnapshot read_snapshot(const std::filesystem::path& path);

// Binary search over the sorted records; nullopt for unknown keys.
std::optional<std::span<const float>> lookup(const EmbeddingSnapshot& snapshot,
                                             const std::string& task_key);

// Lossless TSV export: task_key <tab> version <tab> v0,v1,...
void export_snapshot_tsv(const EmbeddingSnapshot& snapshot,
                         const std::filesystem::path& path);

struct Checkpoint {
  std::string algorithm;  // vanilla | maml | limaml
  ModelBundle bundle;
  std::string config_json = "{}";    // resolved training config snapshot
  std::string metadata_json = "{}";  // tool version, seed, inputs
};

void write_checkpoint(const Checkpoint& checkpoint,
                      const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Verifies that two bundles share architecture (specs, wiring and every
// parameter shape); the first mismatch is named in the thrown error.
void check_same_architecture(const ModelBundle& expected,
                             const ModelBundle& actual);

// JSON (de)serialization for architecture descriptors, shared with
// manifests.
std::string mlp_spec_to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const std::string& json_text);

}  // namespace metarec
