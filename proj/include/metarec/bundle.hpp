// Two-block model: a per-task-adaptable meta block feeding a shared global
// block. The meta block is either a small MLP over meta features or a
// per-task-key embedding row; the global block consumes the meta embedding
// concatenated with the remaining features. kNone degenerates to a single
// network over [meta, other], used by the vanilla and entire-network
// trainers.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metarec/data.hpp"
#include "metarec/mlp.hpp"

namespace metarec {

enum class MetaBlockKind : std::uint8_t { kNone, kMlp, kIdEmbedding };

MetaBlockKind meta_block_kind_from_string(const std::string& s);
std::string to_string(MetaBlockKind k);

struct MetaBlockArch {
  MetaBlockKind kind = MetaBlockKind::kNone;
  MlpSpec mlp;                     // kind == kMlp
  std::size_t embedding_dim = 0;   // 0 when kind == kNone

  bool operator==(const MetaBlockArch&) const = default;
};

// Id-embedding rows live in theta_meta under "row:<task_key>"; unseen keys
// fall back to a shared all-zero default row.
inline const char* kIdRowPrefix = "row:";
std::string id_row_name(const std::string& task_key);

struct ModelBundle {
  MetaBlockArch meta_arch;
  ParamSet theta_meta;
  MlpSpec global_spec;
  ParamSet theta_global;
  std::size_t meta_dim = 0;
  std::size_t other_dim = 0;
  // Meta features may be wired through to the global block alongside the
  // embedding.
  bool feed_meta_to_global = true;

  std::size_t embedding_dim() const { return meta_arch.embedding_dim; }
  std::size_t global_input_dim() const;
  void validate() const;
};

// Tanh-hidden sigmoid-output classifier spec over input_dim features.
MlpSpec classifier_spec(std::size_t input_dim,
                        const std::vector<std::size_t>& hidden);

// Builders; parameters come from a seeded generator.
ModelBundle make_plain_bundle(std::size_t meta_dim, std::size_t other_dim,
                              const std::vector<std::size_t>& hidden_widths,
                              std::uint64_t seed);
ModelBundle make_mlp_bundle(std::size_t meta_dim, std::size_t other_dim,
                            const std::vector<std::size_t>& meta_hidden,
                            std::size_t embedding_dim,
                            const std::vector<std::size_t>& global_hidden,
                            bool feed_meta_to_global, std::uint64_t seed);
ModelBundle make_id_bundle(std::size_t meta_dim, std::size_t other_dim,
                           std::size_t embedding_dim,
                           const std::vector<std::string>& task_keys,
                           const std::vector<std::size_t>& global_hidden,
                           bool feed_meta_to_global, std::uint64_t seed);

// Graph-path forward passes.
Var meta_block_forward(const ModelBundle& bundle, const ParamVars& theta_meta,
                       const std::string& task_key, const Var& meta_X,
                       Mode mode = Mode::kEval, Rng* rng = nullptr);
// Full network: probabilities for a batch (m x 1). theta_meta is ignored
// for kNone bundles.
Var bundle_forward(const ModelBundle& bundle, const ParamVars& theta_meta,
                   const ParamVars& theta_global, const std::string& task_key,
                   const Tensor& meta_X, const Tensor& other_X,
                   Mode mode = Mode::kEval, Rng* rng = nullptr);

// Graph-free paths (serving and evaluation scoring).
Tensor meta_block_eval(const ModelBundle& bundle, const ParamSet& theta_meta,
                       const std::string& task_key, const Tensor& meta_X);
// Score with an externally supplied embedding (one row per sample or a
// single row broadcast over the batch).
Tensor global_eval_with_embedding(const ModelBundle& bundle,
                                  const Tensor& embedding,
                                  const Tensor& meta_X, const Tensor& other_X);
Tensor bundle_eval(const ModelBundle& bundle, const ParamSet& theta_meta,
                   const std::string& task_key, const Tensor& meta_X,
                   const Tensor& other_X);

// Trainable-parameter view combining both blocks under "meta/" and
// "global/" prefixes (the unit the outer optimizer works on).
ParamSet combined_params(const ModelBundle& bundle);
void assign_combined(ModelBundle& bundle, const ParamSet& combined);

}  // namespace metarec
