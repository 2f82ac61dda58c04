// Offline meta-embedding generation: per-task fine-tuning of the meta block
// on recent samples, then scoring to produce a fixed-size embedding per
// task. Fine-tuning runs through the full network with the global block
// frozen, so embeddings stay useful to the block that will consume them.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metarec/bundle.hpp"
#include "metarec/data.hpp"

namespace metarec {

enum class Pooling : std::uint8_t { kLatest, kMax, kMean, kCos };

Pooling pooling_from_string(const std::string& s);
std::string to_string(Pooling p);

struct EmbedGenConfig {
  int k = 1;                 // fine-tune gradient steps
  double alpha = 0.1;        // task learning rate (may differ from training)
  int window_days = 15;      // recency window X
  Pooling pooling = Pooling::kLatest;
  std::string version = "1970-01-01";  // YYYY-MM-DD snapshot date
  std::size_t min_samples = 1;

  void validate() const;
};

struct MetaEmbedding {
  std::string task_key;
  std::vector<double> vector;
  std::string version;
  std::size_t sample_count_used = 0;
};

// "YYYY-MM-DD" -> epoch seconds at 00:00:00 UTC.
std::int64_t date_to_epoch(const std::string& yyyy_mm_dd);

// Samples with timestamp in (as_of - window_days * 86400, as_of],
// chronological.
std::vector<Sample> select_window(const TaskDataset& task, int window_days,
                                  std::int64_t as_of);

// Pooling over chronologically ordered per-sample embeddings (last =
// latest). Cosine weights are floored at zero; a zero weight sum falls back
// to the latest embedding.
std::vector<double> pool(const std::vector<std::vector<double>>& embeddings,
                         Pooling mode);

// Fine-tuned meta parameters for one task: k full-batch gradient steps on
// the samples' loss through the full network with only the meta view
// trainable. For id-embedding bundles the result holds just this task's row.
ParamSet adapt_meta_for_task(const ModelBundle& bundle,
                             std::span<const Sample> samples, int k,
                             double alpha);

// Meta-block output using adapted parameters where present, falling back to
// the bundle's shared parameters.
Tensor meta_block_eval_adapted(const ModelBundle& bundle,
                               const ParamSet& adapted,
                               const std::string& task_key,
                               const Tensor& meta_X);

struct EmbedGenResult {
  std::vector<MetaEmbedding> embeddings;  // sorted by task key
  std::size_t skipped_no_samples = 0;     // window too sparse
  std::size_t skipped_non_finite = 0;     // fine-tune diverged
};

// Runs the generation flow over every task; deterministic for fixed inputs
// and across worker counts. The shared bundle is never mutated.
EmbedGenResult generate_embeddings(const TaskCollection& tasks,
                                   const ModelBundle& bundle,
                                   const EmbedGenConfig& config,
                                   int workers = 1);

}  // namespace metarec
